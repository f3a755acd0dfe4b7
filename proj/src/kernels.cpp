#include "medbridge/kernels.hpp"

#include <cmath>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace medbridge::kernels {

namespace {

std::vector<double> row_sums(const Matrix& m) {
    std::vector<double> sums(m.rows, 0.0);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(m.rows); ++r) {
        double s = 0.0;
        const double* p = m.a.data() + static_cast<std::size_t>(r) * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) s += p[c];
        sums[static_cast<std::size_t>(r)] = s;
    }
    return sums;
}

std::vector<double> row_sums_serial(const Matrix& m) {
    std::vector<double> sums(m.rows, 0.0);
    for (std::size_t r = 0; r < m.rows; ++r) {
        double s = 0.0;
        const double* p = m.a.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) s += p[c];
        sums[r] = s;
    }
    return sums;
}

double total_of(const std::vector<double>& sums) {
    double t = 0.0;
    for (double s : sums) t += s;
    return t;
}

inline double ppmi_cell(double count, double ri, double rj, double total) {
    if (count <= 0.0 || ri <= 0.0 || rj <= 0.0) return 0.0;
    const double pmi = std::log(count * total / (ri * rj));
    return pmi > 0.0 ? pmi : 0.0;
}

}  // namespace

void ppmi_inplace_serial(Matrix& m) {
    const std::vector<double> sums = row_sums_serial(m);
    const double total = total_of(sums);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t c = 0; c < m.cols; ++c)
            m.at(r, c) = ppmi_cell(m.at(r, c), sums[r], sums[c], total);
}

void ppmi_inplace(Matrix& m, ExecMode mode) {
    if (mode == ExecMode::Serial) {
        ppmi_inplace_serial(m);
        return;
    }
    const std::vector<double> sums = row_sums(m);
    const double total = total_of(sums);
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(m.rows); ++r) {
        const auto rr = static_cast<std::size_t>(r);
        for (std::size_t c = 0; c < m.cols; ++c)
            m.at(rr, c) = ppmi_cell(m.at(rr, c), sums[rr], sums[c], total);
    }
}

void matvec_serial(const Matrix& m, std::span<const double> x, std::span<double> y) {
    for (std::size_t r = 0; r < m.rows; ++r) {
        double s = 0.0;
        const double* p = m.a.data() + r * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) s += p[c] * x[c];
        y[r] = s;
    }
}

void matvec(const Matrix& m, std::span<const double> x, std::span<double> y, ExecMode mode) {
    if (mode == ExecMode::Serial) {
        matvec_serial(m, x, y);
        return;
    }
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
    for (std::ptrdiff_t r = 0; r < static_cast<std::ptrdiff_t>(m.rows); ++r) {
        double s = 0.0;
        const double* p = m.a.data() + static_cast<std::size_t>(r) * m.cols;
        for (std::size_t c = 0; c < m.cols; ++c) s += p[c] * x[c];
        y[static_cast<std::size_t>(r)] = s;
    }
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

namespace {

// Deterministic uniform doubles in [0,1) from raw 64-bit state; avoids
// distribution objects whose output can differ across standard libraries.
struct SplitMix64 {
    std::uint64_t state;
    std::uint64_t next_u64() {
        state += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
};

}  // namespace

std::vector<EigPair> power_iteration_eigs(const Matrix& m, std::size_t d, std::uint64_t seed,
                                          int iters, ExecMode mode) {
    const std::size_t n = m.rows;
    std::vector<EigPair> eigs;
    eigs.reserve(d);
    SplitMix64 rng{seed ^ 0xA5A5A5A5DEADBEEFULL};

    std::vector<double> v(n), w(n);
    for (std::size_t k = 0; k < d; ++k) {
        for (std::size_t i = 0; i < n; ++i) v[i] = rng.next_double() - 0.5;
        // Start orthogonal to already-found components.
        for (const auto& e : eigs) {
            const double c = dot(v, e.vector);
            for (std::size_t i = 0; i < n; ++i) v[i] -= c * e.vector[i];
        }
        double nv = norm2(v);
        if (nv <= 0.0) {
            v.assign(n, 0.0);
            v[k % n] = 1.0;
            nv = 1.0;
        }
        for (std::size_t i = 0; i < n; ++i) v[i] /= nv;

        for (int it = 0; it < iters; ++it) {
            matvec(m, v, w, mode);
            for (const auto& e : eigs) {
                const double c = dot(w, e.vector);
                for (std::size_t i = 0; i < n; ++i) w[i] -= c * e.vector[i];
            }
            const double nw = norm2(w);
            if (nw <= 1e-300) break;  // component lives in the deflated null space
            for (std::size_t i = 0; i < n; ++i) v[i] = w[i] / nw;
        }

        matvec(m, v, w, mode);
        EigPair pair;
        pair.value = dot(v, w);
        pair.vector = v;
        eigs.push_back(std::move(pair));
    }
    return eigs;
}

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

}  // namespace medbridge::kernels
