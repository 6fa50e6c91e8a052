#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace derasim {

// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Empty feasible set. `pair` names the violated bound pair, e.g. "d_min > g + c_wd".
class FeasibilityError : public std::runtime_error {
public:
    FeasibilityError(const std::string& what, std::string pair)
        : std::runtime_error(what), pair_(std::move(pair)) {}
    const std::string& pair() const noexcept { return pair_; }

private:
    std::string pair_;
};

// Iterative method stopped before reaching its tolerance.
class ConvergenceError : public std::runtime_error {
public:
    ConvergenceError(const std::string& what, std::vector<double> residuals = {})
        : std::runtime_error(what), residuals_(std::move(residuals)) {}
    const std::vector<double>& residuals() const noexcept { return residuals_; }

private:
    std::vector<double> residuals_;
};

// A modelling hypothesis required by the operation does not hold.
class AssumptionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Invalid configuration or input file.
class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& what, std::string path = {})
        : std::runtime_error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

}  // namespace derasim
