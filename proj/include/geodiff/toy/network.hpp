#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "geodiff/denoiser.hpp"
#include "geodiff/schedule.hpp"

namespace geodiff::toy {

/// Layer sizes of the toy convolutional denoiser. The network input is the
/// noisy latent followed by the conditioning channels.
struct ToyArch {
  int target_channels = 3;
  int cond_channels = 3;
  int width = 24;
  int hidden_layers = 7;
  int time_features = 8;  // sinusoidal features of t / (timesteps - 1); even
  int timesteps = 1000;

  int input_channels() const { return target_channels + cond_channels; }
  bool operator==(const ToyArch&) const = default;
};

/// Activations recorded by a forward pass for the backward pass.
struct ForwardTape {
  int height = 0;
  int width = 0;
  std::vector<double> time_features;
  std::vector<std::vector<double>> inputs;  // input of each conv layer, channel-major
  std::vector<std::vector<double>> pre;     // pre-activation of each hidden layer
};

/// Small 3x3-convolution network: `hidden_layers` conv + SiLU layers of equal
/// width, each with a learned per-channel timestep embedding, followed by a
/// linear 3x3 output conv.
class ToyDenoiser final : public Denoiser {
 public:
  ToyDenoiser(ToyArch arch, Parameterization param, std::vector<double> params);

  /// Random initialization (scaled Gaussian weights, zero biases).
  static ToyDenoiser initialize(const ToyArch& arch, Parameterization param, std::uint64_t seed);
  static std::size_t parameter_count(const ToyArch& arch);

  const ToyArch& arch() const { return arch_; }
  const std::vector<double>& params() const { return params_; }
  std::vector<double>& params() { return params_; }

  /// `cond` may be null only when the architecture has no conditioning channels.
  FieldStack forward(const FieldStack& noisy, const FieldStack* cond, int t, ForwardTape* tape = nullptr) const;

  /// Adds d(loss)/d(params) to `grad` given d(loss)/d(output).
  void backward(const ForwardTape& tape, const FieldStack& d_output, std::span<double> grad) const;

  FieldStack predict(const FieldStack& noisy, const FieldStack& cond, int t) const override;
  Parameterization parameterization() const override { return param_; }
  ChannelSignature signature() const override { return {arch_.target_channels, arch_.cond_channels}; }

 private:
  struct LayerOffsets {
    std::size_t weights;
    std::size_t bias;
    std::size_t embedding;  // unused for the output layer
    int in;
    int out;
  };
  std::vector<LayerOffsets> layout() const;

  ToyArch arch_;
  Parameterization param_;
  std::vector<double> params_;
};

/// Builds a conditioned network from an unconditioned one by duplicating the
/// input-layer weights over `target_channels` new conditioning channels and
/// halving both copies, so feeding the latent twice reproduces the original.
ToyDenoiser widen_input(const ToyDenoiser& unconditioned);

/// Adam with bias correction.
class Adam {
 public:
  explicit Adam(std::size_t size, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void step(std::span<double> params, std::span<const double> grad);

 private:
  double lr_;
  double beta1_;
  double beta2_;
  double eps_;
  long long t_ = 0;
  std::vector<double> m_;
  std::vector<double> v_;
};

}  // namespace geodiff::toy
