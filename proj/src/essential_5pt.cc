#include "sloc/error.h"
#include "sloc/solvers.h"

#include "polynomial.h"

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>

namespace sloc {

namespace {

// Monomials of degree <= 3 in (x, y, z). The first ten are eliminated by
// Gauss-Jordan; the last ten span the quotient ring.
constexpr int kNumMonomials = 20;
constexpr std::array<std::array<int, 3>, kNumMonomials> kExponents = {{
    {3, 0, 0}, {0, 3, 0}, {2, 1, 0}, {1, 2, 0}, {2, 0, 1}, {2, 0, 0}, {0, 2, 1}, {0, 2, 0}, {1, 1, 1}, {1, 1, 0},
    {1, 0, 2}, {1, 0, 1}, {1, 0, 0}, {0, 1, 2}, {0, 1, 1}, {0, 1, 0}, {0, 0, 3}, {0, 0, 2}, {0, 0, 1}, {0, 0, 0},
}};
constexpr int kX = 12, kY = 15, kZ = 18, kOne = 19;

constexpr std::array<std::array<std::array<int, 4>, 4>, 4> make_index() {
    std::array<std::array<std::array<int, 4>, 4>, 4> idx{};
    for (auto &a : idx)
        for (auto &b : a)
            b.fill(-1);
    for (int i = 0; i < kNumMonomials; ++i)
        idx[kExponents[i][0]][kExponents[i][1]][kExponents[i][2]] = i;
    return idx;
}
constexpr auto kIndex = make_index();

struct Poly3 {
    std::array<double, kNumMonomials> c{};

    Poly3 &operator+=(const Poly3 &o) {
        for (int i = 0; i < kNumMonomials; ++i)
            c[i] += o.c[i];
        return *this;
    }
    Poly3 &operator-=(const Poly3 &o) {
        for (int i = 0; i < kNumMonomials; ++i)
            c[i] -= o.c[i];
        return *this;
    }
    Poly3 operator*(double s) const {
        Poly3 r = *this;
        for (double &v : r.c)
            v *= s;
        return r;
    }
};

Poly3 operator+(Poly3 a, const Poly3 &b) { return a += b; }
Poly3 operator-(Poly3 a, const Poly3 &b) { return a -= b; }

Poly3 operator*(const Poly3 &a, const Poly3 &b) {
    Poly3 r;
    for (int i = 0; i < kNumMonomials; ++i) {
        if (a.c[i] == 0.0)
            continue;
        for (int j = 0; j < kNumMonomials; ++j) {
            if (b.c[j] == 0.0)
                continue;
            const int ex = kExponents[i][0] + kExponents[j][0];
            const int ey = kExponents[i][1] + kExponents[j][1];
            const int ez = kExponents[i][2] + kExponents[j][2];
            // Products never exceed total degree 3 for the constraints built
            // below.
            r.c[kIndex[ex][ey][ez]] += a.c[i] * b.c[j];
        }
    }
    return r;
}

using UniPoly = std::vector<double>;

UniPoly mul(const UniPoly &a, const UniPoly &b) {
    UniPoly r(a.size() + b.size() - 1, 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t j = 0; j < b.size(); ++j)
            r[i + j] += a[i] * b[j];
    return r;
}

UniPoly add(const UniPoly &a, const UniPoly &b, double sb = 1.0) {
    UniPoly r(std::max(a.size(), b.size()), 0.0);
    for (std::size_t i = 0; i < a.size(); ++i)
        r[i] += a[i];
    for (std::size_t i = 0; i < b.size(); ++i)
        r[i] += sb * b[i];
    return r;
}

Mat3 to_matrix(const Eigen::Matrix<double, 9, 1> &e) {
    Mat3 E;
    E << e(0), e(1), e(2), e(3), e(4), e(5), e(6), e(7), e(8);
    return E;
}

// det(E) and the nine entries of 2 E E^T E - trace(E E^T) E.
Eigen::Matrix<double, 10, 1> constraints(const Mat3 &E) {
    Eigen::Matrix<double, 10, 1> r;
    r(0) = E.determinant();
    const Mat3 EEt = E * E.transpose();
    const Mat3 T = 2.0 * EEt * E - EEt.trace() * E;
    for (int i = 0; i < 9; ++i)
        r(1 + i) = T(i / 3, i % 3);
    return r;
}

// Directional derivative of the constraints along dE.
Eigen::Matrix<double, 10, 1> constraints_diff(const Mat3 &E, const Mat3 &dE) {
    Eigen::Matrix<double, 10, 1> r;
    // d det(E) = <cofactor(E), dE>
    Mat3 cof;
    cof.col(0) = E.col(1).cross(E.col(2));
    cof.col(1) = E.col(2).cross(E.col(0));
    cof.col(2) = E.col(0).cross(E.col(1));
    r(0) = cof.cwiseProduct(dE).sum();
    const Mat3 EEt = E * E.transpose();
    const Mat3 dT = 2.0 * (dE * E.transpose() * E + E * dE.transpose() * E + EEt * dE) -
                    2.0 * (E.cwiseProduct(dE)).sum() * E - EEt.trace() * dE;
    for (int i = 0; i < 9; ++i)
        r(1 + i) = dT(i / 3, i % 3);
    return r;
}

// Gauss-Newton on the unit sphere of nullspace coefficients. Returns false
// when the constraints cannot be driven to zero, which marks a spurious root.
bool polish(const Eigen::Matrix<double, 9, 4> &null, Eigen::Vector4d &v) {
    double res = constraints(to_matrix(null * v)).norm();
    for (int it = 0; it < 10 && res > 1e-15; ++it) {
        const Mat3 E = to_matrix(null * v);
        Eigen::Matrix<double, 11, 4> J;
        for (int k = 0; k < 4; ++k)
            J.block<10, 1>(0, k) = constraints_diff(E, to_matrix(null.col(k)));
        J.row(10) = v.transpose();
        Eigen::Matrix<double, 11, 1> rhs;
        rhs << -constraints(E), 0.0;
        const Eigen::Vector4d cand = (v + J.colPivHouseholderQr().solve(rhs)).normalized();
        const double cand_res = constraints(to_matrix(null * cand)).norm();
        if (!(cand_res < res))
            break;
        v = cand;
        res = cand_res;
    }
    return res < 1e-10;
}

} // namespace

std::vector<EssentialMatrix> essential_5pt(std::span<const NormalizedMatch> matches) {
    if (matches.size() != 5)
        throw Error(ErrorCode::kInvalidArgument, "essential_5pt needs exactly 5 correspondences");

    // Epipolar constraint x2^T E x1 = 0 is linear in the row-major entries of E.
    Eigen::Matrix<double, 9, 5> Qt;
    for (int k = 0; k < 5; ++k) {
        const Vec3 a = matches[k].x1.homogeneous();
        const Vec3 b = matches[k].x2.homogeneous();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j)
                Qt(3 * i + j, k) = b(i) * a(j);
    }
    Eigen::ColPivHouseholderQR<Eigen::Matrix<double, 9, 5>> qr(Qt);
    const auto &R = qr.matrixR();
    if (!(std::abs(R(4, 4)) > 1e-10 * std::abs(R(0, 0))))
        throw Error(ErrorCode::kDegenerateSample, "epipolar design matrix has rank < 5");
    const Eigen::Matrix<double, 9, 9> Qfull = qr.householderQ();
    const Eigen::Matrix<double, 9, 4> null = Qfull.rightCols<4>();

    // E = x X + y Y + z Z + W with each entry linear in (x, y, z).
    std::array<Poly3, 9> E;
    for (int i = 0; i < 9; ++i) {
        E[i].c[kX] = null(i, 0);
        E[i].c[kY] = null(i, 1);
        E[i].c[kZ] = null(i, 2);
        E[i].c[kOne] = null(i, 3);
    }
    auto e = [&](int r, int c) -> const Poly3 & { return E[3 * r + c]; };

    Eigen::Matrix<double, 10, kNumMonomials> A;
    const Poly3 det = e(0, 0) * (e(1, 1) * e(2, 2) - e(1, 2) * e(2, 1)) -
                      e(0, 1) * (e(1, 0) * e(2, 2) - e(1, 2) * e(2, 0)) +
                      e(0, 2) * (e(1, 0) * e(2, 1) - e(1, 1) * e(2, 0));
    for (int i = 0; i < kNumMonomials; ++i)
        A(0, i) = det.c[i];

    // 2 E E^T E - trace(E E^T) E = 0
    std::array<Poly3, 9> EEt;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            EEt[3 * r + c] = e(r, 0) * e(c, 0) + e(r, 1) * e(c, 1) + e(r, 2) * e(c, 2);
    const Poly3 trace = EEt[0] + EEt[4] + EEt[8];
    for (int r = 0; r < 3; ++r) {
        for (int c = 0; c < 3; ++c) {
            Poly3 p = (EEt[3 * r + 0] * e(0, c) + EEt[3 * r + 1] * e(1, c) + EEt[3 * r + 2] * e(2, c)) * 2.0;
            p -= trace * e(r, c);
            for (int i = 0; i < kNumMonomials; ++i)
                A(1 + 3 * r + c, i) = p.c[i];
        }
    }

    Eigen::FullPivLU<Eigen::Matrix<double, 10, 10>> lu(A.leftCols<10>());
    if (!lu.isInvertible())
        return {};
    const Eigen::Matrix<double, 10, 10> B = lu.solve(A.rightCols<10>());

    // Hide z: subtracting z times the rows of x^2, y^2, xy from the rows of
    // x^2 z, y^2 z, xyz leaves three equations linear in (x, y, 1).
    auto row_poly = [&](int hi, int lo, int c2, int c1, int c0) {
        return UniPoly{B(hi, c0), B(hi, c1) - B(lo, c0), B(hi, c2) - B(lo, c1), -B(lo, c2)};
    };
    auto row_const = [&](int hi, int lo) {
        return UniPoly{B(hi, 9), B(hi, 8) - B(lo, 9), B(hi, 7) - B(lo, 8), B(hi, 6) - B(lo, 7), -B(lo, 6)};
    };
    const std::array<int, 3> hi_rows = {4, 6, 8};
    const std::array<int, 3> lo_rows = {5, 7, 9};
    std::array<std::array<UniPoly, 3>, 3> M;
    for (int r = 0; r < 3; ++r) {
        M[r][0] = row_poly(hi_rows[r], lo_rows[r], 0, 1, 2);
        M[r][1] = row_poly(hi_rows[r], lo_rows[r], 3, 4, 5);
        M[r][2] = row_const(hi_rows[r], lo_rows[r]);
    }
    const UniPoly c0 = add(mul(M[1][1], M[2][2]), mul(M[1][2], M[2][1]), -1.0);
    const UniPoly c1 = add(mul(M[1][0], M[2][2]), mul(M[1][2], M[2][0]), -1.0);
    const UniPoly c2 = add(mul(M[1][0], M[2][1]), mul(M[1][1], M[2][0]), -1.0);
    const UniPoly det_z = add(add(mul(M[0][0], c0), mul(M[0][1], c1), -1.0), mul(M[0][2], c2));

    std::vector<EssentialMatrix> out;
    for (double z : detail::real_roots(det_z)) {
        Mat3 Bz;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                Bz(r, c) = detail::poly_eval(M[r][c], z);
        const Vec3 r0 = Bz.row(0), r1 = Bz.row(1), r2 = Bz.row(2);
        Vec3 v = r0.cross(r1);
        if (const Vec3 w = r0.cross(r2); w.squaredNorm() > v.squaredNorm())
            v = w;
        if (const Vec3 w = r1.cross(r2); w.squaredNorm() > v.squaredNorm())
            v = w;
        if (!(std::abs(v.z()) > 1e-300))
            continue;
        Vec3 sol(v.x() / v.z(), v.y() / v.z(), z);
        if (!sol.allFinite())
            continue;

        Eigen::Vector4d v4(sol.x(), sol.y(), sol.z(), 1.0);
        v4.normalize();
        if (!polish(null, v4))
            continue;
        const Mat3 Em = to_matrix(null * v4);
        const bool duplicate = std::any_of(out.begin(), out.end(), [&](const Mat3 &F) {
            return std::min((F - Em).norm(), (F + Em).norm()) < 1e-9;
        });
        if (!duplicate)
            out.push_back(Em);
    }
    return out;
}

} // namespace sloc
