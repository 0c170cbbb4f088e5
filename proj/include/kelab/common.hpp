#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <limits>
#include <stdexcept>
#include <string>

namespace kelab {

using Rational = boost::multiprecision::cpp_rational;
using BigInt = boost::multiprecision::cpp_int;

// Rejected input: the CLI maps this to exit code 2.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// A computation that ran and failed: exit code 3.
class ComputationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Accepts "3/4", "-2", "0.75", "1e-3". Decimal text is converted exactly.
Rational parse_rational(const std::string& text);

// Shortest round-trip decimal of x, read back as an exact rational.
Rational rational_from_double(double x);

// "p/q" with q > 0; integers print as "p/1".
std::string rational_string(const Rational& r);

double to_double(const Rational& r);

// Worker threads allowed for `requested` independent tasks, capped by KELAB_THREADS.
int thread_cap(int requested);

}  // namespace kelab
