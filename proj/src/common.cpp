#include "kelab/common.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace kelab {

namespace {

BigInt pow10(int e) {
    BigInt r = 1;
    for (int i = 0; i < e; ++i) r *= 10;
    return r;
}

Rational parse_decimal(const std::string& s) {
    std::size_t i = 0;
    bool neg = false;
    if (i < s.size() && (s[i] == '+' || s[i] == '-')) neg = s[i++] == '-';
    BigInt mant = 0;
    int frac_digits = 0;
    bool any = false, dot = false;
    for (; i < s.size(); ++i) {
        char ch = s[i];
        if (std::isdigit(static_cast<unsigned char>(ch))) {
            mant = mant * 10 + (ch - '0');
            if (dot) ++frac_digits;
            any = true;
        } else if (ch == '.' && !dot) {
            dot = true;
        } else {
            break;
        }
    }
    if (!any) throw ValidationError("malformed number: " + s);
    long exp10 = 0;
    if (i < s.size() && (s[i] == 'e' || s[i] == 'E')) {
        ++i;
        std::size_t used = 0;
        try {
            exp10 = std::stol(s.substr(i), &used);
        } catch (const std::exception&) {
            throw ValidationError("malformed number: " + s);
        }
        i += used;
    }
    if (i != s.size()) throw ValidationError("malformed number: " + s);
    long e = exp10 - frac_digits;
    if (e > 4000 || e < -4000) throw ValidationError("number out of range: " + s);
    Rational r = e >= 0 ? Rational(mant * pow10(static_cast<int>(e)))
                        : Rational(mant, pow10(static_cast<int>(-e)));
    return neg ? Rational(-r) : r;
}

}  // namespace

Rational parse_rational(const std::string& text) {
    std::string s;
    for (char ch : text)
        if (!std::isspace(static_cast<unsigned char>(ch))) s.push_back(ch);
    if (s.empty()) throw ValidationError("empty number");
    auto slash = s.find('/');
    if (slash == std::string::npos) return parse_decimal(s);
    Rational num = parse_decimal(s.substr(0, slash));
    Rational den = parse_decimal(s.substr(slash + 1));
    if (den == 0) throw ValidationError("zero denominator: " + text);
    return num / den;
}

Rational rational_from_double(double x) {
    if (!std::isfinite(x)) throw ValidationError("non-finite number");
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, x);
    return parse_decimal(std::string(buf, res.ptr));
}

std::string rational_string(const Rational& r) {
    return numerator(r).str() + "/" + denominator(r).str();
}

double to_double(const Rational& r) { return r.convert_to<double>(); }

int thread_cap(int requested) {
    int cap = static_cast<int>(std::thread::hardware_concurrency());
    if (cap < 1) cap = 1;
    if (const char* env = std::getenv("KELAB_THREADS")) {
        int v = std::atoi(env);
        if (v >= 1) cap = v;
    }
    return std::max(1, std::min(cap, requested));
}

}  // namespace kelab
