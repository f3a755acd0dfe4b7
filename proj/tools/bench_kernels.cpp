// Compares the serial reference kernels against the OpenMP variants on a
// synthetic PPMI factorization workload and verifies they agree bit for bit.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>

#include "medbridge/kernels.hpp"

using medbridge::kernels::ExecMode;
using medbridge::kernels::Matrix;

namespace {

double now_ms() {
    return std::chrono::duration<double, std::milli>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

Matrix synthetic_counts(std::size_t n, std::uint64_t seed) {
    Matrix m(n, n);
    std::uint64_t s = seed | 1;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i; j < n; ++j) {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            const double c = static_cast<double>(s % 17);  // sparse-ish counts
            m.at(i, j) = c;
            m.at(j, i) = c;
        }
    }
    return m;
}

bool identical(const Matrix& a, const Matrix& b) {
    for (std::size_t i = 0; i < a.a.size(); ++i)
        if (a.a[i] != b.a[i]) return false;
    return true;
}

template <typename F>
double time_best_of(int reps, F&& fn) {
    double best = 1e300;
    for (int r = 0; r < reps; ++r) {
        const double t0 = now_ms();
        fn();
        best = std::min(best, now_ms() - t0);
    }
    return best;
}

}  // namespace

int main(int argc, char** argv) {
    const std::size_t n = argc > 1 ? static_cast<std::size_t>(std::stoul(argv[1])) : 1200;
    const std::size_t d = argc > 2 ? static_cast<std::size_t>(std::stoul(argv[2])) : 16;
    std::printf("kernel benchmark: n=%zu d=%zu threads=%d\n", n, d,
                medbridge::kernels::max_threads());

    const Matrix base = synthetic_counts(n, 42);

    Matrix serial_m = base;
    const double t_ppmi_serial =
        time_best_of(3, [&] { serial_m = base; medbridge::kernels::ppmi_inplace_serial(serial_m); });
    Matrix parallel_m = base;
    const double t_ppmi_parallel = time_best_of(3, [&] {
        parallel_m = base;
        medbridge::kernels::ppmi_inplace(parallel_m, ExecMode::Parallel);
    });
    std::printf("ppmi      serial %8.2f ms | openmp %8.2f ms | speedup %.2fx | identical %s\n",
                t_ppmi_serial, t_ppmi_parallel, t_ppmi_serial / t_ppmi_parallel,
                identical(serial_m, parallel_m) ? "yes" : "NO");

    std::vector<double> x(n), y_serial(n), y_parallel(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = std::sin(static_cast<double>(i));
    const double t_mv_serial =
        time_best_of(5, [&] { medbridge::kernels::matvec_serial(serial_m, x, y_serial); });
    const double t_mv_parallel = time_best_of(
        5, [&] { medbridge::kernels::matvec(serial_m, x, y_parallel, ExecMode::Parallel); });
    bool mv_same = true;
    for (std::size_t i = 0; i < n; ++i)
        if (y_serial[i] != y_parallel[i]) mv_same = false;
    std::printf("matvec    serial %8.2f ms | openmp %8.2f ms | speedup %.2fx | identical %s\n",
                t_mv_serial, t_mv_parallel, t_mv_serial / t_mv_parallel, mv_same ? "yes" : "NO");

    const double t_eig_serial = time_best_of(1, [&] {
        (void)medbridge::kernels::power_iteration_eigs(serial_m, d, 7, 100, ExecMode::Serial);
    });
    const double t_eig_parallel = time_best_of(1, [&] {
        (void)medbridge::kernels::power_iteration_eigs(serial_m, d, 7, 100, ExecMode::Parallel);
    });
    const auto eig_s =
        medbridge::kernels::power_iteration_eigs(serial_m, d, 7, 100, ExecMode::Serial);
    const auto eig_p =
        medbridge::kernels::power_iteration_eigs(serial_m, d, 7, 100, ExecMode::Parallel);
    bool eig_same = eig_s.size() == eig_p.size();
    for (std::size_t k = 0; eig_same && k < eig_s.size(); ++k) {
        if (eig_s[k].value != eig_p[k].value) eig_same = false;
        for (std::size_t i = 0; eig_same && i < n; ++i)
            if (eig_s[k].vector[i] != eig_p[k].vector[i]) eig_same = false;
    }
    std::printf("eigs(d)   serial %8.2f ms | openmp %8.2f ms | speedup %.2fx | identical %s\n",
                t_eig_serial, t_eig_parallel, t_eig_serial / t_eig_parallel,
                eig_same ? "yes" : "NO");
    return 0;
}
