#include "geodiff/toy/network.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "geodiff/random.hpp"

namespace geodiff::toy {

namespace {

struct Span2 {
  int lo;
  int hi;  // exclusive
};

Span2 valid_range(int n, int offset) { return {std::max(0, -offset), std::min(n, n - offset)}; }

std::size_t weight_index(int o, int c, int ky, int kx, int cin) {
  return ((static_cast<std::size_t>(o) * static_cast<std::size_t>(cin) + static_cast<std::size_t>(c)) * 3 +
          static_cast<std::size_t>(ky)) *
             3 +
         static_cast<std::size_t>(kx);
}

// out[o] += sum_c w[o, c] (*) in[c], zero padding.
void conv_forward(const double* in, int cin, const double* w, int cout, double* out, int h, int wd) {
  const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(wd);
  for (int o = 0; o < cout; ++o) {
    double* dst = out + static_cast<std::size_t>(o) * plane;
    for (int c = 0; c < cin; ++c) {
      const double* src = in + static_cast<std::size_t>(c) * plane;
      for (int ky = 0; ky < 3; ++ky) {
        const Span2 ys = valid_range(h, ky - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const double wv = w[weight_index(o, c, ky, kx, cin)];
          const Span2 xs = valid_range(wd, kx - 1);
          for (int y = ys.lo; y < ys.hi; ++y) {
            double* row = dst + static_cast<std::size_t>(y) * static_cast<std::size_t>(wd);
            const double* srow = src + static_cast<std::size_t>(y + ky - 1) * static_cast<std::size_t>(wd) + (kx - 1);
            for (int x = xs.lo; x < xs.hi; ++x) row[x] += wv * srow[x];
          }
        }
      }
    }
  }
}

// d_in += conv^T(d_out), dw += correlation(in, d_out).
void conv_backward(const double* in, int cin, const double* w, int cout, const double* d_out, double* d_in,
                   double* dw, int h, int wd) {
  const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(wd);
  for (int o = 0; o < cout; ++o) {
    const double* g = d_out + static_cast<std::size_t>(o) * plane;
    for (int c = 0; c < cin; ++c) {
      const double* src = in + static_cast<std::size_t>(c) * plane;
      double* dsrc = d_in ? d_in + static_cast<std::size_t>(c) * plane : nullptr;
      for (int ky = 0; ky < 3; ++ky) {
        const Span2 ys = valid_range(h, ky - 1);
        for (int kx = 0; kx < 3; ++kx) {
          const std::size_t wi = weight_index(o, c, ky, kx, cin);
          const double wv = w[wi];
          const Span2 xs = valid_range(wd, kx - 1);
          double acc = 0.0;
          for (int y = ys.lo; y < ys.hi; ++y) {
            const double* grow = g + static_cast<std::size_t>(y) * static_cast<std::size_t>(wd);
            const std::size_t off = static_cast<std::size_t>(y + ky - 1) * static_cast<std::size_t>(wd);
            const double* srow = src + off + (kx - 1);
            for (int x = xs.lo; x < xs.hi; ++x) acc += grow[x] * srow[x];
            if (dsrc) {
              double* drow = dsrc + off + (kx - 1);
              for (int x = xs.lo; x < xs.hi; ++x) drow[x] += wv * grow[x];
            }
          }
          dw[wi] += acc;
        }
      }
    }
  }
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::vector<double> time_embedding(int t, const ToyArch& arch) {
  const double tau = arch.timesteps > 1 ? static_cast<double>(t) / (arch.timesteps - 1) : 0.0;
  std::vector<double> f(static_cast<std::size_t>(arch.time_features));
  for (int k = 0; k < arch.time_features / 2; ++k) {
    const double freq = std::ldexp(std::numbers::pi, k);
    f[static_cast<std::size_t>(2 * k)] = std::sin(freq * tau);
    f[static_cast<std::size_t>(2 * k + 1)] = std::cos(freq * tau);
  }
  return f;
}

void validate(const ToyArch& arch) {
  require(arch.target_channels >= 1 && arch.cond_channels >= 0, "toy arch: invalid channel counts");
  require(arch.width >= 1 && arch.hidden_layers >= 1, "toy arch: invalid layer sizes");
  require(arch.time_features >= 0 && arch.time_features % 2 == 0, "toy arch: time_features must be even");
  require(arch.timesteps >= 1, "toy arch: timesteps must be positive");
}

}  // namespace

std::size_t ToyDenoiser::parameter_count(const ToyArch& arch) {
  validate(arch);
  std::size_t n = 0;
  int in = arch.input_channels();
  for (int l = 0; l < arch.hidden_layers; ++l) {
    n += static_cast<std::size_t>(arch.width) * static_cast<std::size_t>(in) * 9 + static_cast<std::size_t>(arch.width) +
         static_cast<std::size_t>(arch.width) * static_cast<std::size_t>(arch.time_features);
    in = arch.width;
  }
  n += static_cast<std::size_t>(arch.target_channels) * static_cast<std::size_t>(in) * 9 +
       static_cast<std::size_t>(arch.target_channels);
  return n;
}

ToyDenoiser::ToyDenoiser(ToyArch arch, Parameterization param, std::vector<double> params)
    : arch_(arch), param_(param), params_(std::move(params)) {
  require(params_.size() == parameter_count(arch_), "toy denoiser: parameter count does not match architecture");
}

std::vector<ToyDenoiser::LayerOffsets> ToyDenoiser::layout() const {
  std::vector<LayerOffsets> layers;
  std::size_t at = 0;
  int in = arch_.input_channels();
  for (int l = 0; l <= arch_.hidden_layers; ++l) {
    const bool output = l == arch_.hidden_layers;
    const int out = output ? arch_.target_channels : arch_.width;
    LayerOffsets lo{};
    lo.in = in;
    lo.out = out;
    lo.weights = at;
    at += static_cast<std::size_t>(out) * static_cast<std::size_t>(in) * 9;
    lo.bias = at;
    at += static_cast<std::size_t>(out);
    lo.embedding = at;
    if (!output) at += static_cast<std::size_t>(out) * static_cast<std::size_t>(arch_.time_features);
    layers.push_back(lo);
    in = out;
  }
  return layers;
}

ToyDenoiser ToyDenoiser::initialize(const ToyArch& arch, Parameterization param, std::uint64_t seed) {
  std::vector<double> params(parameter_count(arch), 0.0);
  ToyDenoiser model(arch, param, std::move(params));
  Rng rng(split_seed(seed, 0x1a7));
  const auto layers = model.layout();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerOffsets& lo = layers[l];
    const bool output = l + 1 == layers.size();
    const double std_dev = (output ? 0.5 : std::sqrt(2.0)) / std::sqrt(9.0 * lo.in);
    for (std::size_t i = 0; i < static_cast<std::size_t>(lo.out) * static_cast<std::size_t>(lo.in) * 9; ++i) {
      model.params_[lo.weights + i] = std_dev * rng.normal();
    }
    if (!output) {
      for (std::size_t i = 0; i < static_cast<std::size_t>(lo.out) * static_cast<std::size_t>(arch.time_features); ++i) {
        model.params_[lo.embedding + i] = 0.3 * rng.normal();
      }
    }
  }
  return model;
}

FieldStack ToyDenoiser::forward(const FieldStack& noisy, const FieldStack* cond, int t, ForwardTape* tape) const {
  require(noisy.channels() == arch_.target_channels, "toy denoiser: latent channel mismatch");
  if (arch_.cond_channels > 0) {
    require(cond != nullptr && cond->channels() == arch_.cond_channels, "toy denoiser: conditioning channel mismatch");
    require(cond->height() == noisy.height() && cond->width() == noisy.width(), "toy denoiser: conditioning size mismatch");
  }
  require(t >= 0 && t < arch_.timesteps, "toy denoiser: timestep out of range");
  const int h = noisy.height();
  const int w = noisy.width();
  const auto plane = static_cast<std::size_t>(h) * static_cast<std::size_t>(w);

  std::vector<double> x(static_cast<std::size_t>(arch_.input_channels()) * plane);
  for (int c = 0; c < arch_.target_channels; ++c) {
    std::copy_n(noisy.plane(c).values().begin(), plane, x.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }
  for (int c = 0; c < arch_.cond_channels; ++c) {
    std::copy_n(cond->plane(c).values().begin(), plane,
                x.begin() + static_cast<std::ptrdiff_t>((arch_.target_channels + c) * plane));
  }
  const std::vector<double> tf = time_embedding(t, arch_);
  if (tape) {
    tape->height = h;
    tape->width = w;
    tape->time_features = tf;
    tape->inputs.clear();
    tape->pre.clear();
  }

  const auto layers = layout();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const LayerOffsets& lo = layers[l];
    const bool output = l + 1 == layers.size();
    std::vector<double> y(static_cast<std::size_t>(lo.out) * plane);
    for (int o = 0; o < lo.out; ++o) {
      double b = params_[lo.bias + static_cast<std::size_t>(o)];
      if (!output) {
        for (int k = 0; k < arch_.time_features; ++k) {
          b += params_[lo.embedding + static_cast<std::size_t>(o * arch_.time_features + k)] * tf[static_cast<std::size_t>(k)];
        }
      }
      std::fill_n(y.begin() + static_cast<std::ptrdiff_t>(o * plane), plane, b);
    }
    conv_forward(x.data(), lo.in, &params_[lo.weights], lo.out, y.data(), h, w);
    if (tape) tape->inputs.push_back(x);
    if (!output) {
      if (tape) tape->pre.push_back(y);
      for (double& v : y) v = v * sigmoid(v);
    }
    x = std::move(y);
  }

  FieldStack out(arch_.target_channels, h, w);
  for (int c = 0; c < arch_.target_channels; ++c) {
    std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(c * plane), plane, out.plane(c).values().begin());
  }
  return out;
}

void ToyDenoiser::backward(const ForwardTape& tape, const FieldStack& d_output, std::span<double> grad) const {
  require(grad.size() == params_.size(), "toy denoiser: gradient buffer has the wrong size");
  require(d_output.channels() == arch_.target_channels && d_output.height() == tape.height &&
              d_output.width() == tape.width,
          "toy denoiser: output gradient shape mismatch");
  const auto plane = static_cast<std::size_t>(tape.height) * static_cast<std::size_t>(tape.width);
  const auto layers = layout();
  require(tape.inputs.size() == layers.size(), "toy denoiser: tape does not match the network");

  std::vector<double> g(static_cast<std::size_t>(arch_.target_channels) * plane);
  for (int c = 0; c < arch_.target_channels; ++c) {
    std::copy_n(d_output.plane(c).values().begin(), plane, g.begin() + static_cast<std::ptrdiff_t>(c * plane));
  }

  for (std::size_t l = layers.size(); l-- > 0;) {
    const LayerOffsets& lo = layers[l];
    const bool output = l + 1 == layers.size();
    if (!output) {
      const std::vector<double>& pre = tape.pre[l];
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = sigmoid(pre[i]);
        g[i] *= s * (1.0 + pre[i] * (1.0 - s));
      }
    }
    for (int o = 0; o < lo.out; ++o) {
      double sum = 0.0;
      const double* go = g.data() + static_cast<std::size_t>(o) * plane;
      for (std::size_t p = 0; p < plane; ++p) sum += go[p];
      grad[lo.bias + static_cast<std::size_t>(o)] += sum;
      if (!output) {
        for (int k = 0; k < arch_.time_features; ++k) {
          grad[lo.embedding + static_cast<std::size_t>(o * arch_.time_features + k)] += sum * tape.time_features[static_cast<std::size_t>(k)];
        }
      }
    }
    const bool need_input_grad = l > 0;
    std::vector<double> d_in(need_input_grad ? static_cast<std::size_t>(lo.in) * plane : 0, 0.0);
    conv_backward(tape.inputs[l].data(), lo.in, &params_[lo.weights], lo.out, g.data(),
                  need_input_grad ? d_in.data() : nullptr, &grad[lo.weights], tape.height, tape.width);
    g = std::move(d_in);
  }
}

FieldStack ToyDenoiser::predict(const FieldStack& noisy, const FieldStack& cond, int t) const {
  check_denoiser_inputs(*this, noisy, cond);
  return forward(noisy, &cond, t);
}

ToyDenoiser widen_input(const ToyDenoiser& unconditioned) {
  const ToyArch& src = unconditioned.arch();
  require(src.cond_channels == 0, "widen_input expects a network without conditioning channels");
  ToyArch arch = src;
  arch.cond_channels = src.target_channels;
  const int in_old = src.input_channels();
  const int in_new = arch.input_channels();

  std::vector<double> params;
  params.reserve(ToyDenoiser::parameter_count(arch));
  const auto& old = unconditioned.params();
  // First-layer weights are laid out [out][in][3][3].
  for (int o = 0; o < src.width; ++o) {
    for (int copy = 0; copy < 2; ++copy) {
      for (int c = 0; c < in_old; ++c) {
        for (int k = 0; k < 9; ++k) params.push_back(old[(static_cast<std::size_t>(o) * in_old + c) * 9 + k] / 2.0);
      }
    }
  }
  const std::size_t first_weights = static_cast<std::size_t>(src.width) * static_cast<std::size_t>(in_old) * 9;
  params.insert(params.end(), old.begin() + static_cast<std::ptrdiff_t>(first_weights), old.end());
  require(in_new == 2 * in_old, "widen_input: unexpected channel layout");
  return ToyDenoiser(arch, unconditioned.parameterization(), std::move(params));
}

Adam::Adam(std::size_t size, double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), m_(size, 0.0), v_(size, 0.0) {
  require(lr > 0.0, "adam: learning rate must be positive");
}

void Adam::step(std::span<double> params, std::span<const double> grad) {
  require(params.size() == m_.size() && grad.size() == m_.size(), "adam: size mismatch");
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
    params[i] -= lr_ * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + eps_);
  }
}

}  // namespace geodiff::toy
