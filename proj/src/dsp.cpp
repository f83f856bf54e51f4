#include "timbre/dsp.hpp"

#include <fftw3.h>

#include <cmath>
#include <map>
#include <mutex>

namespace timbre::dsp {

namespace {

// FFTW plan creation is not thread-safe; execution with per-call buffers is.
struct PlanCache {
  std::mutex mu;
  std::map<int, fftw_plan> fwd;
  std::map<int, fftw_plan> inv;

  fftw_plan forward(int n) {
    std::lock_guard<std::mutex> lock(mu);
    auto it = fwd.find(n);
    if (it != fwd.end()) return it->second;
    double* in = fftw_alloc_real(n);
    fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
    fftw_plan p = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    fwd[n] = p;
    return p;
  }

  fftw_plan inverse(int n) {
    std::lock_guard<std::mutex> lock(mu);
    auto it = inv.find(n);
    if (it != inv.end()) return it->second;
    fftw_complex* in = fftw_alloc_complex(n / 2 + 1);
    double* out = fftw_alloc_real(n);
    fftw_plan p = fftw_plan_dft_c2r_1d(n, in, out, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
    inv[n] = p;
    return p;
  }
};

PlanCache& cache() {
  static PlanCache c;
  return c;
}

}  // namespace

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  const int n = static_cast<int>(x.size());
  fftw_plan plan = cache().forward(n);
  double* in = fftw_alloc_real(n);
  fftw_complex* out = fftw_alloc_complex(n / 2 + 1);
  std::copy(x.begin(), x.end(), in);
  fftw_execute_dft_r2c(plan, in, out);
  std::vector<std::complex<double>> bins(n / 2 + 1);
  for (int i = 0; i <= n / 2; ++i) bins[i] = {out[i][0], out[i][1]};
  fftw_free(in);
  fftw_free(out);
  return bins;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& bins, int n) {
  fftw_plan plan = cache().inverse(n);
  fftw_complex* in = fftw_alloc_complex(n / 2 + 1);
  double* out = fftw_alloc_real(n);
  for (int i = 0; i <= n / 2; ++i) {
    in[i][0] = bins[i].real();
    in[i][1] = bins[i].imag();
  }
  fftw_execute_dft_c2r(plan, in, out);
  std::vector<double> x(n);
  for (int i = 0; i < n; ++i) x[i] = out[i] / n;
  fftw_free(in);
  fftw_free(out);
  return x;
}

std::vector<double> hann_window(int n) {
  std::vector<double> w(n);
  for (int i = 0; i < n; ++i)
    w[i] = 0.5 * (1.0 - std::cos(2.0 * M_PI * i / n));
  return w;
}

int dominant_bin(const std::vector<double>& x) {
  auto bins = rfft(x);
  int best = 0;
  double best_mag = -1.0;
  for (size_t i = 0; i < bins.size(); ++i) {
    double m = std::abs(bins[i]);
    if (m > best_mag) {
      best_mag = m;
      best = static_cast<int>(i);
    }
  }
  return best;
}

double dominant_frequency_hz(const std::vector<float>& x, int sample_rate) {
  std::vector<double> xd(x.begin(), x.end());
  int bin = dominant_bin(xd);
  return static_cast<double>(bin) * sample_rate / static_cast<double>(x.size());
}

}  // namespace timbre::dsp
