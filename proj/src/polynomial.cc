#include "polynomial.h"

#include <algorithm>
#include <cmath>

namespace sloc::detail {

namespace {

using Poly = std::vector<double>;

// Drops leading coefficients that are negligible relative to the largest one.
void trim(Poly &p) {
    double max_abs = 0.0;
    for (double c : p)
        max_abs = std::max(max_abs, std::abs(c));
    while (p.size() > 1 && std::abs(p.back()) <= 1e-14 * max_abs)
        p.pop_back();
}

Poly derivative(const Poly &p) {
    Poly d(p.size() > 1 ? p.size() - 1 : 1, 0.0);
    for (std::size_t i = 1; i < p.size(); ++i)
        d[i - 1] = static_cast<double>(i) * p[i];
    return d;
}

// Remainder of a / b.
Poly remainder(Poly a, const Poly &b) {
    const std::size_t nb = b.size();
    while (a.size() >= nb) {
        const double f = a.back() / b.back();
        const std::size_t shift = a.size() - nb;
        for (std::size_t i = 0; i < nb; ++i)
            a[shift + i] -= f * b[i];
        a.pop_back();
    }
    if (a.empty())
        a.push_back(0.0);
    return a;
}

void normalize_leading(Poly &p) {
    const double lead = std::abs(p.back());
    if (lead > 0.0)
        for (double &c : p)
            c /= lead;
}

struct SturmChain {
    std::vector<Poly> chain;

    explicit SturmChain(const Poly &p) {
        chain.push_back(p);
        Poly d = derivative(p);
        normalize_leading(d);
        chain.push_back(d);
        while (chain.back().size() > 1) {
            Poly r = remainder(chain[chain.size() - 2], chain.back());
            for (double &c : r)
                c = -c;
            trim(r);
            if (r.size() == 1 && r[0] == 0.0)
                break;
            normalize_leading(r);
            chain.push_back(std::move(r));
        }
    }

    int sign_changes(double x) const {
        int changes = 0;
        double prev = 0.0;
        for (const Poly &q : chain) {
            const double v = poly_eval(q, x);
            if (v == 0.0)
                continue;
            if (prev != 0.0 && (v > 0.0) != (prev > 0.0))
                ++changes;
            prev = v;
        }
        return changes;
    }
};

double polish(const Poly &p, const Poly &dp, double lo, double hi) {
    double flo = poly_eval(p, lo);
    double x = 0.5 * (lo + hi);
    for (int it = 0; it < 200; ++it) {
        const double fx = poly_eval(p, x);
        if (fx == 0.0)
            return x;
        if ((fx > 0.0) == (flo > 0.0)) {
            lo = x;
            flo = fx;
        } else {
            hi = x;
        }
        const double dfx = poly_eval(dp, x);
        double next = dfx != 0.0 ? x - fx / dfx : 0.5 * (lo + hi);
        if (!(next > lo && next < hi))
            next = 0.5 * (lo + hi);
        if (std::abs(next - x) <= 1e-16 * std::max(1.0, std::abs(x)) || hi - lo <= 1e-15 * std::max(1.0, std::abs(x)))
            return next;
        x = next;
    }
    return x;
}

void isolate(const SturmChain &sturm, const Poly &p, const Poly &dp, double lo, double hi, int n_lo, int n_hi,
             int depth, std::vector<double> &roots) {
    const int count = n_lo - n_hi;
    if (count <= 0)
        return;
    if (count == 1) {
        if ((poly_eval(p, lo) > 0.0) != (poly_eval(p, hi) > 0.0)) {
            roots.push_back(polish(p, dp, lo, hi));
            return;
        }
    }
    const double mid = 0.5 * (lo + hi);
    if (depth > 120 || hi - lo <= 1e-14 * std::max(1.0, std::abs(mid))) {
        // Clustered roots that double precision cannot separate.
        for (int k = 0; k < count; ++k)
            roots.push_back(mid);
        return;
    }
    const int n_mid = sturm.sign_changes(mid);
    isolate(sturm, p, dp, lo, mid, n_lo, n_mid, depth + 1, roots);
    isolate(sturm, p, dp, mid, hi, n_mid, n_hi, depth + 1, roots);
}

} // namespace

double poly_eval(std::span<const double> coeffs, double x) {
    double v = 0.0;
    for (std::size_t i = coeffs.size(); i-- > 0;)
        v = v * x + coeffs[i];
    return v;
}

std::vector<double> real_roots(std::span<const double> coeffs) {
    Poly p(coeffs.begin(), coeffs.end());
    trim(p);
    std::vector<double> roots;
    if (p.size() < 2)
        return roots;
    normalize_leading(p);
    if (p.back() < 0.0)
        for (double &c : p)
            c = -c;

    // Cauchy bound on root magnitude.
    double bound = 0.0;
    for (std::size_t i = 0; i + 1 < p.size(); ++i)
        bound = std::max(bound, std::abs(p[i]));
    bound += 1.0;

    const SturmChain sturm(p);
    const Poly dp = derivative(p);
    // Open interval slightly wider than the bound so no root sits on an end.
    const double lo = -bound * 1.01, hi = bound * 1.01;
    isolate(sturm, p, dp, lo, hi, sturm.sign_changes(lo), sturm.sign_changes(hi), 0, roots);
    std::sort(roots.begin(), roots.end());
    return roots;
}

} // namespace sloc::detail
