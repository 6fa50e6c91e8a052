#pragma once

#include <string>

namespace derasim {

enum class BenchmarkMode {
    Nem,         // active or passive NEM surplus per the prosumer's behavior flag
    NemActive,
    NemPassive,
    Gab,         // opt-out surplus under two-part pricing
    Fixed,
};

struct CompetitiveConfig {
    double zeta = 1.0;
    BenchmarkMode mode = BenchmarkMode::Nem;
    double fixed_k = 0.0;  // used only in Fixed mode

    void validate() const;
};

BenchmarkMode benchmark_mode_from_string(const std::string& s);
const char* to_string(BenchmarkMode m);

}  // namespace derasim
