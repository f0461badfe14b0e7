#pragma once

#include <span>
#include <vector>

namespace sloc::detail {

// Real roots of the polynomial sum_i c[i] x^i (coefficients from low to high
// degree), isolated with a Sturm sequence and polished by safeguarded Newton
// steps. Roots are returned in increasing order.
std::vector<double> real_roots(std::span<const double> coeffs);

double poly_eval(std::span<const double> coeffs, double x);

} // namespace sloc::detail
