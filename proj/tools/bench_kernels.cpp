// Times the serial reference kernels against the OpenMP versions and checks
// that both produce bit-identical output. Run with no arguments for the
// default size sweep, or pass `--reps N` to change the repeat count.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <string>
#include <vector>

#include "hoidet/kernels.hpp"
#include "hoidet/rng.hpp"

namespace {

using clock_type = std::chrono::steady_clock;

double time_best(int reps, const std::function<void()>& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = clock_type::now();
    fn();
    const auto t1 = clock_type::now();
    best = std::min(best, std::chrono::duration<double, std::milli>(t1 - t0).count());
  }
  return best;
}

std::vector<double> random_vec(std::size_t n, hoidet::Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

bool bits_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

struct Row {
  std::string name;
  double serial_ms;
  double omp_ms;
  bool exact;
};

void print_rows(const std::vector<Row>& rows) {
  std::printf("%-28s %12s %12s %9s %7s\n", "kernel", "serial (ms)", "openmp (ms)", "speedup",
              "exact");
  for (const auto& r : rows) {
    std::printf("%-28s %12.3f %12.3f %8.2fx %7s\n", r.name.c_str(), r.serial_ms, r.omp_ms,
                r.serial_ms / r.omp_ms, r.exact ? "yes" : "NO");
  }
}

}  // namespace

int main(int argc, char** argv) {
  int reps = 5;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--reps" && i + 1 < argc) reps = std::atoi(argv[++i]);
  }

  std::printf("openmp compiled: %s, max threads: %d\n\n",
              hoidet::kernels::omp_compiled() ? "yes" : "no", hoidet::kernels::max_threads());

  hoidet::Rng rng(20240815);
  std::vector<Row> rows;
  bool all_exact = true;

  const int mm_sizes[][3] = {{64, 64, 64}, {256, 256, 256}, {512, 256, 512}};
  for (const auto& s : mm_sizes) {
    const int m = s[0], k = s[1], n = s[2];
    auto a = random_vec(static_cast<std::size_t>(m) * k, rng);
    auto b = random_vec(static_cast<std::size_t>(k) * n, rng);
    auto bt = random_vec(static_cast<std::size_t>(n) * k, rng);
    auto at = random_vec(static_cast<std::size_t>(k) * m, rng);
    std::vector<double> c1(static_cast<std::size_t>(m) * n), c2(c1.size());

    char label[64];

    std::snprintf(label, sizeof label, "matmul_nn %dx%dx%d", m, k, n);
    double ts = time_best(reps, [&] { hoidet::kernels::matmul_nn_serial(a.data(), b.data(), c1.data(), m, k, n); });
    double tp = time_best(reps, [&] { hoidet::kernels::matmul_nn_omp(a.data(), b.data(), c2.data(), m, k, n); });
    rows.push_back({label, ts, tp, bits_equal(c1, c2)});

    std::snprintf(label, sizeof label, "matmul_nt %dx%dx%d", m, k, n);
    ts = time_best(reps, [&] { hoidet::kernels::matmul_nt_serial(a.data(), bt.data(), c1.data(), m, k, n); });
    tp = time_best(reps, [&] { hoidet::kernels::matmul_nt_omp(a.data(), bt.data(), c2.data(), m, k, n); });
    rows.push_back({label, ts, tp, bits_equal(c1, c2)});

    std::snprintf(label, sizeof label, "matmul_tn %dx%dx%d", m, k, n);
    ts = time_best(reps, [&] { hoidet::kernels::matmul_tn_serial(at.data(), b.data(), c1.data(), m, k, n); });
    tp = time_best(reps, [&] { hoidet::kernels::matmul_tn_omp(at.data(), b.data(), c2.data(), m, k, n); });
    rows.push_back({label, ts, tp, bits_equal(c1, c2)});
  }

  {
    const int r = 4096, c = 256;
    auto x = random_vec(static_cast<std::size_t>(r) * c, rng);
    std::vector<double> y1(x.size()), y2(x.size());
    double ts = time_best(reps, [&] { hoidet::kernels::softmax_rows_serial(x.data(), y1.data(), r, c); });
    double tp = time_best(reps, [&] { hoidet::kernels::softmax_rows_omp(x.data(), y2.data(), r, c); });
    rows.push_back({"softmax_rows 4096x256", ts, tp, bits_equal(y1, y2)});

    std::vector<double> s1(r), s2(r);
    ts = time_best(reps, [&] { hoidet::kernels::layernorm_rows_serial(x.data(), y1.data(), s1.data(), r, c, 1e-12); });
    tp = time_best(reps, [&] { hoidet::kernels::layernorm_rows_omp(x.data(), y2.data(), s2.data(), r, c, 1e-12); });
    rows.push_back({"layernorm_rows 4096x256", ts, tp, bits_equal(y1, y2) && bits_equal(s1, s2)});
  }

  {
    const int c = 16, h = 128, w = 128, k = 3, stride = 2, pad = 1;
    const int oh = hoidet::kernels::conv_out_extent(h, k, stride, pad);
    const int ow = hoidet::kernels::conv_out_extent(w, k, stride, pad);
    auto x = random_vec(static_cast<std::size_t>(c) * h * w, rng);
    std::vector<double> y1(static_cast<std::size_t>(oh) * ow * c * k * k), y2(y1.size());
    double ts = time_best(reps, [&] { hoidet::kernels::im2col_serial(x.data(), c, h, w, k, stride, pad, y1.data()); });
    double tp = time_best(reps, [&] { hoidet::kernels::im2col_omp(x.data(), c, h, w, k, stride, pad, y2.data()); });
    rows.push_back({"im2col 16x128x128 k3s2p1", ts, tp, bits_equal(y1, y2)});
  }

  print_rows(rows);
  for (const auto& r : rows) all_exact &= r.exact;
  std::printf("\nbit-exact across all kernels: %s\n", all_exact ? "yes" : "NO");
  return all_exact ? 0 : 1;
}
