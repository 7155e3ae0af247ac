#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cctype>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>

namespace cdsclear {

/// Exact rational scalar used for all verification arithmetic. Money and
/// rates are both rationals; solvers may work in double internally but every
/// certificate is checked with this type.
using Rat = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

/// Parse "p/q", a plain integer, or a decimal with optional exponent
/// ("0.25", "1e-3", "-7/2"). Returns nullopt on malformed input.
inline std::optional<Rat> parse_rational(std::string_view text) {
  // trim
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
  while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
  if (text.empty()) return std::nullopt;

  bool negative = false;
  if (text.front() == '+' || text.front() == '-') {
    negative = text.front() == '-';
    text.remove_prefix(1);
    if (text.empty()) return std::nullopt;
  }

  auto is_digits = [](std::string_view s) {
    if (s.empty()) return false;
    for (char c : s)
      if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
  };

  if (auto slash = text.find('/'); slash != std::string_view::npos) {
    std::string_view num = text.substr(0, slash);
    std::string_view den = text.substr(slash + 1);
    if (!is_digits(num) || !is_digits(den)) return std::nullopt;
    BigInt n{std::string(num)};
    BigInt d{std::string(den)};
    if (d == 0) return std::nullopt;
    Rat r(n, d);
    return negative ? Rat(-r) : r;
  }

  // decimal / scientific form: digits [. digits] [e|E [sign] digits]
  std::string_view mantissa = text;
  long exponent10 = 0;
  if (auto e = text.find_first_of("eE"); e != std::string_view::npos) {
    mantissa = text.substr(0, e);
    std::string_view exp = text.substr(e + 1);
    bool exp_neg = false;
    if (!exp.empty() && (exp.front() == '+' || exp.front() == '-')) {
      exp_neg = exp.front() == '-';
      exp.remove_prefix(1);
    }
    if (!is_digits(exp) || exp.size() > 6) return std::nullopt;
    exponent10 = std::stol(std::string(exp));
    if (exp_neg) exponent10 = -exponent10;
  }

  std::string_view whole = mantissa;
  std::string_view frac;
  if (auto dot = mantissa.find('.'); dot != std::string_view::npos) {
    whole = mantissa.substr(0, dot);
    frac = mantissa.substr(dot + 1);
  }
  if (whole.empty() && frac.empty()) return std::nullopt;
  if (!whole.empty() && !is_digits(whole)) return std::nullopt;
  if (!frac.empty() && !is_digits(frac)) return std::nullopt;

  BigInt digits{std::string(whole) + std::string(frac)};
  long shift = exponent10 - static_cast<long>(frac.size());
  Rat r(digits);
  if (shift > 0) {
    BigInt pow10 = 1;
    for (long i = 0; i < shift; ++i) pow10 *= 10;
    r *= Rat(pow10);
  } else if (shift < 0) {
    BigInt pow10 = 1;
    for (long i = 0; i < -shift; ++i) pow10 *= 10;
    r /= Rat(pow10);
  }
  return negative ? Rat(-r) : r;
}

/// Canonical exact form: "p" for integers, "p/q" otherwise.
inline std::string format_rational(const Rat& r) {
  std::string num = numerator(r).str();
  if (denominator(r) == 1) return num;
  return num + "/" + denominator(r).str();
}

inline double to_double(const Rat& r) { return r.convert_to<double>(); }

/// 12-significant-digit decimal rendering; approximate, for human eyes only.
inline std::string decimal_string(const Rat& r) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", to_double(r));
  return std::string(buf);
}

inline Rat rat_abs(const Rat& r) { return r < 0 ? Rat(-r) : r; }

}  // namespace cdsclear
