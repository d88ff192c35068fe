#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <string>

namespace bt {

using Rational = boost::multiprecision::cpp_rational;

// gamma_l = (n-2)/(2(n-4)) ((n-2)/(n-6))^{l-1} - 1/2, exact, for l >= 1.
Rational gamma(int n, int l);

double to_double(const Rational& q);
std::string to_string(const Rational& q);

// eps^{q} evaluated as exp(q log eps) in extended precision.
long double eps_power(double eps, const Rational& q);

}  // namespace bt
