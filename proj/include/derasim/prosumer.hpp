#pragma once

#include <concepts>
#include <limits>
#include <string>
#include <vector>

namespace derasim {

inline constexpr double kUnlimited = std::numeric_limits<double>::infinity();

/// Evaluation contract for a concave, nondecreasing consumption utility.
template <class T>
concept Utility = requires(const T& u, double x) {
    { u.value(x) } -> std::convertible_to<double>;
    { u.marginal(x) } -> std::convertible_to<double>;
    { u.inverse_marginal(x) } -> std::convertible_to<double>;
};

/// U(x) = alpha*x - beta*x^2/2, flat at alpha^2/(2 beta) beyond the satiation point alpha/beta.
struct QuadraticUtility {
    double alpha = 0.0;  // $/kWh
    double beta = 0.0;   // $/kWh^2

    QuadraticUtility() = default;
    QuadraticUtility(double alpha, double beta);

    double satiation() const noexcept { return alpha / beta; }
    double value(double x) const;
    /// Right-continuous: exactly 0 at and beyond the satiation point.
    double marginal(double x) const;
    /// (alpha - pi)/beta clamped to [0, alpha/beta].
    double inverse_marginal(double pi) const;
};

static_assert(Utility<QuadraticUtility>);

enum class Behavior { Active, Passive };

/// Injection (c_inj) and withdrawal (c_wd) limits at the point of aggregation.
/// kUnlimited disables a limit.
struct PoAAccess {
    double c_inj = kUnlimited;
    double c_wd = kUnlimited;

    static PoAAccess unlimited() { return {}; }
    static PoAAccess symmetric(double c) { return {c, c}; }
    void validate() const;
};

struct Prosumer {
    std::string id;
    int poa = 0;
    QuadraticUtility utility;
    double d_min = 0.0;
    double d_max = kUnlimited;
    Behavior behavior = Behavior::Active;
    PoAAccess access;

    void validate() const;
    /// min{d_max, max{V^-1(pi), d_min}}
    double inverse_demand(double pi) const;
};

/// Free-function forms of the utility primitives.
double utility_value(const QuadraticUtility& u, double x);
double marginal_utility(const QuadraticUtility& u, double x);
double inverse_marginal(const QuadraticUtility& u, double pi);
double inverse_demand(const Prosumer& p, double pi);

/// Parses a JSON array of prosumer records. `null` limits mean unlimited.
std::vector<Prosumer> prosumers_from_json(const std::string& text);
std::vector<Prosumer> load_prosumers(const std::string& path);

}  // namespace derasim
