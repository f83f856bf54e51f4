#pragma once

#include <complex>
#include <vector>

namespace timbre::dsp {

// Forward real FFT, returns n/2+1 complex bins. Backed by FFTW; plans are
// cached per size.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

// Inverse of rfft for a real signal of length n (normalized by 1/n).
std::vector<double> irfft(const std::vector<std::complex<double>>& bins, int n);

// Periodic Hann window of length n.
std::vector<double> hann_window(int n);

// Index of the largest-magnitude bin of the rfft of x.
int dominant_bin(const std::vector<double>& x);

// dominant_bin converted to Hz.
double dominant_frequency_hz(const std::vector<float>& x, int sample_rate);

}  // namespace timbre::dsp
