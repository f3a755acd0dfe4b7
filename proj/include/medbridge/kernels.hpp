#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace medbridge::kernels {

enum class ExecMode { Serial, Parallel };

// Dense row-major square-or-rectangular matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}

    double& at(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
    std::span<const double> row(std::size_t r) const { return {a.data() + r * cols, cols}; }
};

// Positive pointwise mutual information transform of a co-occurrence count
// matrix, in place: m[i][j] <- max(0, log(m[i][j] * total / (row[i] * row[j]))).
// Zero cells stay zero. The parallel variant partitions rows; every cell is
// computed exactly as in the serial reference, so results are bit-identical
// for any thread count.
void ppmi_inplace_serial(Matrix& m);
void ppmi_inplace(Matrix& m, ExecMode mode);

// y = M x. Parallel variant assigns whole rows to threads; per-row summation
// order matches the serial reference, so results are bit-identical.
void matvec_serial(const Matrix& m, std::span<const double> x, std::span<double> y);
void matvec(const Matrix& m, std::span<const double> x, std::span<double> y, ExecMode mode);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);

// Top-d eigenpairs of a symmetric matrix by power iteration with
// Gram-Schmidt deflation. Fixed iteration count, seeded start vectors;
// deterministic for a given (matrix, d, seed) in either exec mode.
struct EigPair {
    double value = 0.0;
    std::vector<double> vector;
};
std::vector<EigPair> power_iteration_eigs(const Matrix& m, std::size_t d, std::uint64_t seed,
                                          int iters, ExecMode mode);

int max_threads();

}  // namespace medbridge::kernels
