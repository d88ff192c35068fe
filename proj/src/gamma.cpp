#include "bubbletower/gamma.hpp"

#include "bubbletower/numerics.hpp"

#include <cmath>

namespace bt {

Rational gamma(int n, int l) {
  if (n <= 6) throw DomainError("gamma: requires n >= 7 (the schedule is singular at n = 6)");
  if (l < 1) throw DomainError("gamma: bubble index starts at 1");
  Rational base(n - 2, 2 * (n - 4));
  Rational ratio(n - 2, n - 6);
  Rational g = base;
  for (int i = 1; i < l; ++i) g *= ratio;
  return g - Rational(1, 2);
}

double to_double(const Rational& q) { return q.convert_to<double>(); }

std::string to_string(const Rational& q) { return q.str(); }

long double eps_power(double eps, const Rational& q) {
  if (!(eps > 0.0)) throw DomainError("eps_power: eps must be positive");
  long double num = static_cast<long double>(boost::multiprecision::numerator(q).convert_to<double>());
  long double den = static_cast<long double>(boost::multiprecision::denominator(q).convert_to<double>());
  return std::exp(num / den * std::log(static_cast<long double>(eps)));
}

}  // namespace bt
