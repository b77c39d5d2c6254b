#pragma once

#include "geodiff/grid.hpp"
#include "geodiff/schedule.hpp"

namespace geodiff {

struct ChannelSignature {
  int target_channels;  // channels of the noisy latent and of the output
  int cond_channels;    // channels of the conditioning stack

  bool operator==(const ChannelSignature&) const = default;
};

/// A denoising model: maps (noisy latent, conditioning, timestep) to a
/// prediction of the declared parameterization. Implementations must be
/// deterministic, and `predict` must be safe to call concurrently.
class Denoiser {
 public:
  virtual ~Denoiser() = default;

  virtual FieldStack predict(const FieldStack& noisy, const FieldStack& cond, int t) const = 0;
  virtual Parameterization parameterization() const = 0;
  virtual ChannelSignature signature() const = 0;
};

/// Throws InvalidArgument unless the inputs match the denoiser's signature.
void check_denoiser_inputs(const Denoiser& denoiser, const FieldStack& noisy, const FieldStack& cond);

}  // namespace geodiff
