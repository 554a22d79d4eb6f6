#pragma once

#include <span>
#include <vector>

#include "siamgcn/common.hpp"
#include "siamgcn/random.hpp"

namespace siamgcn {

/// One Chebyshev graph-convolution layer. theta[k](i, j) is the order-k
/// coefficient of the filter from input map i to output map j.
struct GcnLayerParams {
  int f_in = 0;
  int f_out = 0;
  int k_order = 0;
  std::vector<Matrix> theta;  // k_order + 1 matrices, each f_in x f_out
};

struct ModelSpec {
  int input_features = 0;        // columns of each input signal (R for connectivity profiles)
  std::vector<int> widths{64, 64};
  int k_order = 3;
};

/// Both branches evaluate the same `layers`; there is one copy of the
/// convolution weights.
struct SiameseModel {
  std::vector<GcnLayerParams> layers;
  Vector fc_weights;  // R merge entries followed by the same-site weight
  double fc_bias = 0.0;
  Matrix l_scaled;    // rescaled Laplacian all layers filter with

  Eigen::Index num_nodes() const { return l_scaled.rows(); }
  int k_order() const { return layers.empty() ? 0 : layers.front().k_order; }
  int input_features() const { return layers.empty() ? 0 : layers.front().f_in; }
  std::size_t parameter_count() const;
};

struct ModelGradients {
  std::vector<std::vector<Matrix>> theta;  // mirrors SiameseModel::layers[l].theta
  Vector fc_weights;
  double fc_bias = 0.0;

  static ModelGradients zeros_like(const SiameseModel& model);
  ModelGradients& operator+=(const ModelGradients& other);
};

/// Parameter storage as contiguous blocks in a fixed order: every layer's
/// theta[0..K], then fc_weights, then fc_bias.
std::vector<std::span<double>> parameter_blocks(SiameseModel& model);
std::vector<std::span<double>> parameter_blocks(ModelGradients& grads);

enum class Mode { train, eval };

/// Glorot-style uniform initialisation, deterministic under `seed`.
SiameseModel init_model(const Matrix& l_scaled, const ModelSpec& spec, std::uint64_t seed);

/// Pre-activation of one layer: column j = sum_i g_{theta_ij}(L) x[:, i].
Matrix gcn_layer_forward(const GcnLayerParams& params, const Matrix& l_scaled, const Matrix& x);

/// Activations of one branch, kept for backpropagation.
struct BranchTape {
  std::vector<std::vector<Matrix>> basis;  // per layer: T_k(L) x_in, k = 0..K
  std::vector<Matrix> pre;                 // per layer pre-activation
  Matrix output;                           // ReLU of the last pre-activation

  void clear_intermediates();
};

BranchTape branch_forward(const SiameseModel& model, const Matrix& x);

/// Accumulates parameter gradients of one branch given dJ/d(output).
void branch_backward(const SiameseModel& model, const BranchTape& tape, const Matrix& d_output,
                     ModelGradients& grads);

/// Merge and FC head for one pair.
struct HeadTape {
  Vector merge;       // node-wise inner products, length R
  Vector fc_input;    // (merge, same_site) after dropout scaling
  Vector dropout_scale;
  double pre_sigmoid = 0.0;
  double similarity = 0.0;
};

/// `dropout_scale` has R + 1 entries (0 or 1/keep); empty means no dropout.
HeadTape head_forward(const SiameseModel& model, const Matrix& ya, const Matrix& yb, bool same_site,
                      const Vector& dropout_scale);

/// Returns dJ/dya and dJ/dyb; FC gradients are accumulated into `grads`.
std::pair<Matrix, Matrix> head_backward(const SiameseModel& model, const Matrix& ya,
                                        const Matrix& yb, const HeadTape& head, double d_similarity,
                                        ModelGradients& grads);

/// Inverted dropout mask: 0 with probability 1 - keep, else 1 / keep.
Vector sample_dropout_scale(Eigen::Index size, double keep_prob, Rng& rng);

struct ForwardTape {
  BranchTape a;
  BranchTape b;
  HeadTape head;
  std::vector<std::pair<int, int>> layer_shapes;
};

struct ForwardResult {
  double similarity = 0.0;
  ForwardTape tape;
};

/// Scores a pair of graph signals. In train mode dropout with keep
/// probability `keep_prob` is applied to the FC input using `rng`; eval
/// mode ignores `rng`.
ForwardResult siamese_forward(const SiameseModel& model, const Matrix& xa, const Matrix& xb,
                              bool same_site, Mode mode, Rng* rng, double keep_prob = 0.8);

/// Gradients of J w.r.t. every parameter given dJ/d(similarity). Both
/// branches' contributions are summed into the shared theta gradients.
ModelGradients siamese_backward(const SiameseModel& model, const ForwardTape& tape,
                                double d_similarity);

/// Eval-mode similarity without keeping a tape.
double similarity(const SiameseModel& model, const Matrix& xa, const Matrix& xb, bool same_site);

/// Eval-mode embedding of one signal (the branch output).
Matrix embed(const SiameseModel& model, const Matrix& x);

/// Eval-mode similarity from two precomputed embeddings.
double similarity_from_embeddings(const SiameseModel& model, const Matrix& ya, const Matrix& yb,
                                  bool same_site);

inline double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace siamgcn
