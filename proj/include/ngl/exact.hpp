#ifndef NGL_EXACT_HPP
#define NGL_EXACT_HPP

#include <cmath>
#include <cstdint>
#include <string>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <boost/multiprecision/cpp_int.hpp>

#include "ngl/error.hpp"

namespace ngl {

using BigInt = boost::multiprecision::cpp_int;
using Rational = boost::multiprecision::cpp_rational;

inline Rational make_rational(std::int64_t num, std::int64_t den) {
    if (den == 0) throw ConfigError("zero denominator");
    return Rational(BigInt(num), BigInt(den));
}

/// Parses "p/q", an integer, or a decimal such as "0.25" into an exact rational.
inline Rational parse_rational(const std::string& text) {
    auto slash = text.find('/');
    try {
        if (slash != std::string::npos)
            return Rational(BigInt(text.substr(0, slash)), BigInt(text.substr(slash + 1)));
        auto dot = text.find('.');
        if (dot == std::string::npos) return Rational(BigInt(text));
        std::string digits = text.substr(0, dot) + text.substr(dot + 1);
        BigInt den = boost::multiprecision::pow(BigInt(10), static_cast<unsigned>(text.size() - dot - 1));
        return Rational(BigInt(digits), den);
    } catch (const std::exception&) {
        throw ConfigError("cannot parse rational '" + text + "'");
    }
}

inline double to_double(const Rational& r) { return r.convert_to<double>(); }

inline std::string to_string(const Rational& r) {
    return boost::multiprecision::denominator(r) == 1 ? boost::multiprecision::numerator(r).str() : r.str();
}

/// Exact test of a^x <= b^y for a, b >= 1. Clear-cut cases are settled in
/// floating point; close calls fall back to big-integer powers.
inline bool pow_leq(const BigInt& a, std::uint64_t x, const BigInt& b, std::uint64_t y) {
    if (a < 1 || b < 1) throw ValidationError("pow_leq needs positive bases");
    if (x == 0 || a == 1) return true;
    if (y == 0 || b == 1) return false;
    long double la = static_cast<long double>(x) * std::log2(a.convert_to<long double>());
    long double lb = static_cast<long double>(y) * std::log2(b.convert_to<long double>());
    long double scale = std::max<long double>(1.0L, std::max(la, lb));
    if (lb - la > 1e-12L * scale) return true;
    if (la - lb > 1e-12L * scale) return false;
    if (la > 1e7L) throw ValidationError("exact power comparison too large");
    return boost::multiprecision::pow(a, static_cast<unsigned>(x)) <=
           boost::multiprecision::pow(b, static_cast<unsigned>(y));
}

/// Exact test of lhs <= eps * log_base(size).
inline bool leq_eps_log(const BigInt& lhs, const Rational& eps, int base, const BigInt& size) {
    if (lhs <= 0) return true;
    if (eps <= 0 || size <= 1) return false;
    BigInt p = boost::multiprecision::numerator(eps);
    BigInt q = boost::multiprecision::denominator(eps);
    // base^(lhs*q) <= size^p
    BigInt x = lhs * q;
    if (x > BigInt(std::numeric_limits<std::uint64_t>::max()) || p > BigInt(std::numeric_limits<std::uint64_t>::max()))
        throw ValidationError("exponent overflow in log comparison");
    return pow_leq(BigInt(base), x.convert_to<std::uint64_t>(), size, p.convert_to<std::uint64_t>());
}

/// log_base(x) in floating point, for reporting only.
inline double log_base(double x, int base) { return std::log(x) / std::log(static_cast<double>(base)); }

}  // namespace ngl

#endif  // NGL_EXACT_HPP
