#pragma once

#include <span>
#include <vector>

#include "siamgcn/common.hpp"
#include "siamgcn/model.hpp"

namespace siamgcn {

struct LossConfig {
  double margin = 0.6;
  double lambda_weight = 0.35;
  double l2_coeff = 0.005;

  void validate() const;
};

struct LossValue {
  double loss = 0.0;
  std::vector<double> d_similarity;  // dJ/ds_i, same order as the input
};

/// (var+ + var-) + lambda * max(0, m - (mean+ - mean-)) over a batch of pair
/// similarities. Variances are population variances. At the hinge boundary
/// the subgradient is taken as 0. Throws ValidationError unless both pair
/// classes are present.
LossValue global_loss(std::span<const double> similarities, std::span<const std::uint8_t> match,
                      const LossConfig& cfg);

struct L2Value {
  double penalty = 0.0;
  Vector gradient;
};

/// coeff * ||w||^2 and its gradient 2 * coeff * w.
L2Value l2_penalty(const Vector& fc_weights, double coeff);

struct AdamState {
  double learning_rate = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t step = 0;
  std::vector<double> first_moment;
  std::vector<double> second_moment;
};

/// One bias-corrected Adam update over a flat parameter vector. Moments are
/// sized on first use; later calls must pass the same length.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

/// Adam over every parameter block of the model (see parameter_blocks).
void adam_step(SiameseModel& model, ModelGradients& grads, AdamState& state);

}  // namespace siamgcn
