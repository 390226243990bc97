#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>

#include "facefuse/kernels.hpp"

namespace {

using namespace facefuse;

using Clock = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = Clock::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
    return m;
}

struct Case {
    const char* name;
    std::function<void(Tensor&)> serial;
    std::function<void(Tensor&)> parallel;
    Tensor out_serial;
    Tensor out_parallel;
};

int run() {
    std::mt19937_64 rng(7);
    const Tensor x = random_uniform({8, 16, 32, 32}, -1.0, 1.0, rng);
    const Tensor k = random_uniform({32, 16, 3, 3}, -1.0, 1.0, rng);
    const Tensor gy = random_uniform({8, 32, 32, 32}, -1.0, 1.0, rng);
    const Tensor fx = random_uniform({64, 512}, -1.0, 1.0, rng);
    const Tensor fw = random_uniform({512, 256}, -1.0, 1.0, rng);
    const Tensor fb = random_uniform({256}, -1.0, 1.0, rng);
    const Tensor fgy = random_uniform({64, 256}, -1.0, 1.0, rng);

    std::printf("%-28s %12s %12s %9s %11s\n", "kernel", "serial_ms", "omp_ms", "speedup",
                "max|diff|");

    int failures = 0;
    auto report = [&](const char* name, const std::function<void(Tensor&)>& s,
                      const std::function<void(Tensor&)>& p, Tensor proto, int reps) {
        Tensor out_s = proto, out_p = std::move(proto);
        const double ms_s = time_ms([&] { s(out_s); }, reps);
        const double ms_p = time_ms([&] { p(out_p); }, reps);
        const double diff = max_abs_diff(out_s, out_p);
        std::printf("%-28s %12.3f %12.3f %9.2f %11.3g\n", name, ms_s, ms_p, ms_s / ms_p, diff);
        if (diff != 0.0) {
            std::printf("  MISMATCH: %s backends disagree\n", name);
            ++failures;
        }
    };

    report("conv2d_forward",
           [&](Tensor& o) { kernels::serial::conv2d_forward(x, k, o); },
           [&](Tensor& o) { kernels::omp::conv2d_forward(x, k, o); },
           Tensor({8, 32, 32, 32}), 3);

    report("conv2d_backward_gx",
           [&](Tensor& o) {
               Tensor gk({32, 16, 3, 3});
               o = Tensor(o.shape());
               kernels::serial::conv2d_backward(x, k, gy, o, gk);
           },
           [&](Tensor& o) {
               Tensor gk({32, 16, 3, 3});
               o = Tensor(o.shape());
               kernels::omp::conv2d_backward(x, k, gy, o, gk);
           },
           Tensor({8, 16, 32, 32}), 3);

    report("maxpool2_forward",
           [&](Tensor& o) {
               std::vector<std::size_t> arg;
               kernels::serial::maxpool2_forward(x, o, arg);
           },
           [&](Tensor& o) {
               std::vector<std::size_t> arg;
               kernels::omp::maxpool2_forward(x, o, arg);
           },
           Tensor({8, 16, 16, 16}), 10);

    report("relu_forward",
           [&](Tensor& o) { kernels::serial::relu_forward(x, o); },
           [&](Tensor& o) { kernels::omp::relu_forward(x, o); },
           Tensor(x.shape()), 20);

    report("affine_forward",
           [&](Tensor& o) { kernels::serial::affine_forward(fx, fw, fb, o); },
           [&](Tensor& o) { kernels::omp::affine_forward(fx, fw, fb, o); },
           Tensor({64, 256}), 10);

    report("affine_backward_gw",
           [&](Tensor& o) {
               Tensor gx({64, 512}), gb({256});
               o = Tensor(o.shape());
               kernels::serial::affine_backward(fx, fw, fgy, gx, o, gb);
           },
           [&](Tensor& o) {
               Tensor gx({64, 512}), gb({256});
               o = Tensor(o.shape());
               kernels::omp::affine_backward(fx, fw, fgy, gx, o, gb);
           },
           Tensor({512, 256}), 10);

    report("softmax_forward",
           [&](Tensor& o) { kernels::serial::softmax_forward(fx, 512, o); },
           [&](Tensor& o) { kernels::omp::softmax_forward(fx, 512, o); },
           Tensor({64, 512}), 10);

    if (failures > 0) {
        std::printf("%d kernel(s) disagree between backends\n", failures);
        return 1;
    }
    std::printf("all kernels bitwise identical across backends\n");
    return 0;
}

}  // namespace

int main() { return run(); }
