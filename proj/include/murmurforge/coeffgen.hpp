#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "murmurforge/dataset.hpp"
#include "murmurforge/linalg.hpp"
#include "murmurforge/prime_basis.hpp"
#include "murmurforge/rng.hpp"

namespace murmurforge {

// ---------------------------------------------------------------------------
// Elliptic curves over Q
// ---------------------------------------------------------------------------

/// Long Weierstrass model y^2 + a1 x y + a3 y = x^3 + a2 x^2 + a4 x + a6.
struct WeierstrassCurve {
    std::int64_t a1 = 0, a2 = 0, a3 = 0, a4 = 0, a6 = 0;
    std::string label;

    __int128 discriminant() const {
        const __int128 A1 = a1, A2 = a2, A3 = a3, A4 = a4, A6 = a6;
        const __int128 b2 = A1 * A1 + 4 * A2;
        const __int128 b4 = 2 * A4 + A1 * A3;
        const __int128 b6 = A3 * A3 + 4 * A6;
        const __int128 b8 = A1 * A1 * A6 + 4 * A2 * A6 - A1 * A3 * A4 + A2 * A3 * A3 - A4 * A4;
        return -b2 * b2 * b8 - 8 * b4 * b4 * b4 - 27 * b6 * b6 + 9 * b2 * b4 * b6;
    }
    bool is_nonsingular() const { return discriminant() != 0; }
};

namespace detail {

inline std::int64_t mod_pos(__int128 x, std::int64_t p) {
    std::int64_t r = static_cast<std::int64_t>(x % p);
    return r < 0 ? r + p : r;
}

// Affine points of the reduced curve, optionally excluding singular ones.
// Used for the small-p and bad-reduction paths; O(p^2) but p < 1000.
inline std::int64_t count_affine_points(const WeierstrassCurve& c, std::int64_t p,
                                        bool smooth_only) {
    const std::int64_t a1 = mod_pos(c.a1, p), a2 = mod_pos(c.a2, p), a3 = mod_pos(c.a3, p),
                       a4 = mod_pos(c.a4, p), a6 = mod_pos(c.a6, p);
    std::int64_t count = 0;
    for (std::int64_t x = 0; x < p; ++x) {
        const std::int64_t rhs = mod_pos((__int128)x * x % p * x + (__int128)a2 * x % p * x +
                                             (__int128)a4 * x + a6,
                                         p);
        for (std::int64_t y = 0; y < p; ++y) {
            const std::int64_t lhs = mod_pos((__int128)y * y + (__int128)a1 * x % p * y +
                                                 (__int128)a3 * y,
                                             p);
            if (lhs != rhs) continue;
            if (smooth_only) {
                // F = y^2 + a1 x y + a3 y - x^3 - a2 x^2 - a4 x - a6
                const std::int64_t fx = mod_pos((__int128)a1 * y - 3 * (__int128)x * x % p -
                                                    2 * (__int128)a2 * x - a4,
                                                p);
                const std::int64_t fy = mod_pos(2 * (__int128)y + (__int128)a1 * x + a3, p);
                if (fx == 0 && fy == 0) continue;
            }
            ++count;
        }
    }
    return count;
}

} // namespace detail

/// Trace coefficient a_p of an elliptic curve over Q at a basis prime.
///
/// Good reduction: a_p = p + 1 - #E(F_p). For odd p the affine count is
/// done in O(p) by completing the square, (2y + a1 x + a3)^2 = g(x) with
/// g(x) = 4x^3 + b2 x^2 + 2 b4 x + b6, and tallying square roots from a
/// precomputed table; p = 2, 3 fall back to the exhaustive y-loop.
/// Bad reduction: a_p = p - #E_ns(F_p), counting only nonsingular points
/// (plus infinity), which lands in {0, 1, -1}.
inline std::int64_t ec_ap(const WeierstrassCurve& curve, int p) {
    if (!is_prime(p)) throw std::invalid_argument("ec_ap: p = " + std::to_string(p) + " is not prime");
    if (p >= 1000) throw std::invalid_argument("ec_ap: p must be below 1000");
    if (!curve.is_nonsingular())
        throw std::invalid_argument("ec_ap: curve '" + curve.label + "' is singular");

    const std::int64_t pp = p;
    const bool good = detail::mod_pos(curve.discriminant(), pp) != 0;

    if (!good) {
        const std::int64_t nonsingular = detail::count_affine_points(curve, pp, true) + 1;
        return pp - nonsingular;
    }
    if (p <= 3) {
        const std::int64_t points = detail::count_affine_points(curve, pp, false) + 1;
        return pp + 1 - points;
    }

    const std::int64_t a1 = detail::mod_pos(curve.a1, pp), a2 = detail::mod_pos(curve.a2, pp),
                       a3 = detail::mod_pos(curve.a3, pp), a4 = detail::mod_pos(curve.a4, pp),
                       a6 = detail::mod_pos(curve.a6, pp);
    const std::int64_t b2 = detail::mod_pos((__int128)a1 * a1 + 4 * (__int128)a2, pp);
    const std::int64_t b4 = detail::mod_pos(2 * (__int128)a4 + (__int128)a1 * a3, pp);
    const std::int64_t b6 = detail::mod_pos((__int128)a3 * a3 + 4 * (__int128)a6, pp);

    std::vector<std::int32_t> sq_count(pp, 0);
    for (std::int64_t u = 0; u < pp; ++u) ++sq_count[(u * u) % pp];

    std::int64_t points = 1;  // infinity
    for (std::int64_t x = 0; x < pp; ++x) {
        const std::int64_t g = detail::mod_pos(
            4 * (__int128)x * x % pp * x + (__int128)b2 * x % pp * x + 2 * (__int128)b4 * x + b6,
            pp);
        points += sq_count[g];
    }
    return pp + 1 - points;
}

/// Degree-2, weight-1 record with coefficients from ec_ap across the basis.
/// Conductor and vanishing order are caller-supplied labels; nothing here
/// computes or verifies them.
inline LFunctionRecord ec_record(const WeierstrassCurve& curve, const PrimeBasis& basis,
                                 std::int64_t conductor, int order) {
    if (conductor < 1) throw std::invalid_argument("ec_record: conductor must be positive");
    if (order < 0) throw std::invalid_argument("ec_record: order must be non-negative");
    LFunctionRecord rec;
    rec.label = curve.label;
    rec.degree = 2;
    rec.weight = 1;
    rec.conductor = conductor;
    rec.order = order;
    rec.origins = {Origin::ECQ};
    rec.ap.reserve(basis.size());
    for (int p : basis.primes()) rec.ap.push_back(ec_ap(curve, p));
    return rec;
}

// ---------------------------------------------------------------------------
// Quadratic Dirichlet characters
// ---------------------------------------------------------------------------

inline bool is_squarefree(std::int64_t n) {
    if (n < 0) n = -n;
    if (n == 0) return false;
    for (std::int64_t d = 2; d * d <= n; ++d)
        while (n % d == 0) {
            n /= d;
            if (n % d == 0) return false;
        }
    return true;
}

/// D = 1, or D ≡ 1 mod 4 squarefree, or D = 4m with m ≡ 2, 3 mod 4 squarefree.
inline bool is_fundamental_discriminant(std::int64_t D) {
    if (D == 0) return false;
    const std::int64_t m4 = ((D % 4) + 4) % 4;
    if (m4 == 1) return is_squarefree(D);
    if (m4 == 0) {
        const std::int64_t m = D / 4;
        const std::int64_t mm4 = ((m % 4) + 4) % 4;
        return (mm4 == 2 || mm4 == 3) && is_squarefree(m);
    }
    return false;
}

/// Kronecker symbol (a|n), extending the Jacobi symbol to all integers.
inline int kronecker_symbol(std::int64_t a, std::int64_t n) {
    if (n == 0) return (a == 1 || a == -1) ? 1 : 0;
    int result = 1;
    if (n < 0) {
        n = -n;
        if (a < 0) result = -result;
    }
    while (n % 2 == 0) {
        n /= 2;
        if (a % 2 == 0) return 0;
        const std::int64_t m8 = ((a % 8) + 8) % 8;
        if (m8 == 3 || m8 == 5) result = -result;
    }
    a %= n;
    if (a < 0) a += n;
    while (a != 0) {
        while (a % 2 == 0) {
            a /= 2;
            const std::int64_t m8 = n % 8;
            if (m8 == 3 || m8 == 5) result = -result;
        }
        std::swap(a, n);
        if (a % 4 == 3 && n % 4 == 3) result = -result;
        a %= n;
    }
    return n == 1 ? result : 0;
}

/// Character value chi_D(p) = (D|p) for a fundamental discriminant; zero
/// exactly at primes dividing D.
inline int kronecker_ap(std::int64_t D, int p) {
    if (!is_fundamental_discriminant(D))
        throw std::invalid_argument("kronecker_ap: " + std::to_string(D) +
                                    " is not a fundamental discriminant");
    if (!is_prime(p)) throw std::invalid_argument("kronecker_ap: p is not prime");
    return kronecker_symbol(D, p);
}

/// Degree-1, weight-0 record for the quadratic character of discriminant D.
/// Vanishing order 0 throughout, matching the degree-1 data.
inline LFunctionRecord dirichlet_record(std::int64_t D, const PrimeBasis& basis) {
    LFunctionRecord rec;
    rec.label = "dir." + std::to_string(D);
    rec.degree = 1;
    rec.weight = 0;
    rec.conductor = D < 0 ? -D : D;
    rec.order = 0;
    rec.origins = {Origin::DIR};
    rec.ap.reserve(basis.size());
    for (int p : basis.primes()) rec.ap.push_back(kronecker_ap(D, p));
    return rec;
}

// ---------------------------------------------------------------------------
// Synthetic labeled pointclouds
// ---------------------------------------------------------------------------

/// Gaussian blobs for exercising the learners: k classes around given
/// means with isotropic sigma, per_class samples each.
struct SynthSpec {
    int classes = 2;
    int dim = 2;
    std::vector<std::vector<double>> means;  // one per class, each of length dim
    double sigma = 1.0;
    int per_class = 100;
    std::uint64_t seed = 0;
};

struct SynthData {
    DenseMatrix points;       // (classes * per_class) x dim, class-major
    std::vector<int> labels;  // class index per row
};

inline SynthData synth_pointcloud(const SynthSpec& spec) {
    if (spec.classes < 1) throw std::invalid_argument("synth_pointcloud: classes must be >= 1");
    if (spec.per_class < 1) throw std::invalid_argument("synth_pointcloud: per_class must be >= 1");
    if (spec.sigma <= 0.0) throw std::invalid_argument("synth_pointcloud: sigma must be positive");
    if (spec.dim < 1) throw std::invalid_argument("synth_pointcloud: dim must be >= 1");
    if (spec.means.size() != static_cast<std::size_t>(spec.classes))
        throw std::invalid_argument("synth_pointcloud: need one mean per class");
    for (const auto& mu : spec.means)
        if (mu.size() != static_cast<std::size_t>(spec.dim))
            throw std::invalid_argument("synth_pointcloud: mean dimension mismatch");

    Rng rng(spec.seed);
    SynthData out;
    const std::size_t n = static_cast<std::size_t>(spec.classes) * spec.per_class;
    out.points = DenseMatrix(n, spec.dim);
    out.labels.resize(n);
    std::size_t row = 0;
    for (int c = 0; c < spec.classes; ++c) {
        for (int s = 0; s < spec.per_class; ++s, ++row) {
            out.labels[row] = c;
            for (int j = 0; j < spec.dim; ++j)
                out.points(row, j) = spec.means[c][j] + spec.sigma * rng.normal();
        }
    }
    return out;
}

/// Evenly spread class means used by the CLI when none are given: class c
/// sits at spread * e_{c mod dim}, alternating sign every wrap.
inline std::vector<std::vector<double>> default_synth_means(int classes, int dim, double spread) {
    std::vector<std::vector<double>> means(classes, std::vector<double>(dim, 0.0));
    for (int c = 0; c < classes; ++c) {
        const int axis = c % dim;
        const double sign = (c / dim) % 2 == 0 ? 1.0 : -1.0;
        means[c][axis] = sign * spread * (1.0 + c / (2.0 * dim));
    }
    return means;
}

} // namespace murmurforge
