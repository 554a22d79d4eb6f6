#include "siamgcn/model.hpp"

#include <cmath>
#include <string>

#include "siamgcn/spectral.hpp"

namespace siamgcn {

std::size_t SiameseModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) {
    n += static_cast<std::size_t>(layer.f_in) * static_cast<std::size_t>(layer.f_out) *
         static_cast<std::size_t>(layer.k_order + 1);
  }
  return n + static_cast<std::size_t>(fc_weights.size()) + 1;
}

ModelGradients ModelGradients::zeros_like(const SiameseModel& model) {
  ModelGradients g;
  g.theta.reserve(model.layers.size());
  for (const auto& layer : model.layers) {
    std::vector<Matrix> t;
    for (const auto& m : layer.theta) t.push_back(Matrix::Zero(m.rows(), m.cols()));
    g.theta.push_back(std::move(t));
  }
  g.fc_weights = Vector::Zero(model.fc_weights.size());
  g.fc_bias = 0.0;
  return g;
}

ModelGradients& ModelGradients::operator+=(const ModelGradients& other) {
  for (std::size_t l = 0; l < theta.size(); ++l) {
    for (std::size_t k = 0; k < theta[l].size(); ++k) theta[l][k] += other.theta[l][k];
  }
  fc_weights += other.fc_weights;
  fc_bias += other.fc_bias;
  return *this;
}

namespace {

template <typename Thetas>
void append_blocks(std::vector<std::span<double>>& blocks, Thetas& thetas) {
  for (auto& m : thetas) blocks.emplace_back(m.data(), static_cast<std::size_t>(m.size()));
}

}  // namespace

std::vector<std::span<double>> parameter_blocks(SiameseModel& model) {
  std::vector<std::span<double>> blocks;
  for (auto& layer : model.layers) append_blocks(blocks, layer.theta);
  blocks.emplace_back(model.fc_weights.data(), static_cast<std::size_t>(model.fc_weights.size()));
  blocks.emplace_back(&model.fc_bias, 1);
  return blocks;
}

std::vector<std::span<double>> parameter_blocks(ModelGradients& grads) {
  std::vector<std::span<double>> blocks;
  for (auto& thetas : grads.theta) append_blocks(blocks, thetas);
  blocks.emplace_back(grads.fc_weights.data(), static_cast<std::size_t>(grads.fc_weights.size()));
  blocks.emplace_back(&grads.fc_bias, 1);
  return blocks;
}

SiameseModel init_model(const Matrix& l_scaled, const ModelSpec& spec, std::uint64_t seed) {
  if (l_scaled.rows() < 1 || l_scaled.rows() != l_scaled.cols()) {
    throw ValidationError("init_model: rescaled Laplacian must be square");
  }
  if (spec.input_features < 1) throw ValidationError("init_model: input_features must be positive");
  if (spec.widths.empty()) throw ValidationError("init_model: need at least one layer");
  if (spec.k_order < 0) throw ValidationError("init_model: k_order must be >= 0");

  Rng rng(seed);
  SiameseModel model;
  model.l_scaled = l_scaled;
  int f_in = spec.input_features;
  for (int f_out : spec.widths) {
    if (f_out < 1) throw ValidationError("init_model: layer widths must be positive");
    GcnLayerParams layer;
    layer.f_in = f_in;
    layer.f_out = f_out;
    layer.k_order = spec.k_order;
    const double bound = std::sqrt(6.0 / (f_in * (spec.k_order + 1) + f_out));
    for (int k = 0; k <= spec.k_order; ++k) {
      Matrix theta(f_in, f_out);
      for (Eigen::Index i = 0; i < theta.size(); ++i) theta.data()[i] = rng.uniform(-bound, bound);
      layer.theta.push_back(std::move(theta));
    }
    model.layers.push_back(std::move(layer));
    f_in = f_out;
  }

  const Eigen::Index r = l_scaled.rows();
  const double fc_bound = std::sqrt(6.0 / static_cast<double>(r + 2));
  model.fc_weights.resize(r + 1);
  for (Eigen::Index i = 0; i <= r; ++i) model.fc_weights(i) = rng.uniform(-fc_bound, fc_bound);
  model.fc_bias = 0.0;
  return model;
}

Matrix gcn_layer_forward(const GcnLayerParams& params, const Matrix& l_scaled, const Matrix& x) {
  if (x.cols() != params.f_in) {
    throw ValidationError("gcn_layer_forward: expected " + std::to_string(params.f_in) +
                          " input maps, got " + std::to_string(x.cols()));
  }
  const auto basis = chebyshev_basis(l_scaled, x, params.k_order);
  Matrix out = basis[0] * params.theta[0];
  for (int k = 1; k <= params.k_order; ++k) {
    out.noalias() += basis[static_cast<std::size_t>(k)] * params.theta[static_cast<std::size_t>(k)];
  }
  return out;
}

void BranchTape::clear_intermediates() {
  basis.clear();
  pre.clear();
}

BranchTape branch_forward(const SiameseModel& model, const Matrix& x) {
  if (x.rows() != model.num_nodes()) {
    throw ValidationError("signal has " + std::to_string(x.rows()) + " nodes, model expects " +
                          std::to_string(model.num_nodes()));
  }
  BranchTape tape;
  Matrix input = x;
  for (const auto& layer : model.layers) {
    if (input.cols() != layer.f_in) {
      throw ValidationError("signal has " + std::to_string(input.cols()) +
                            " feature maps, layer expects " + std::to_string(layer.f_in));
    }
    auto basis = chebyshev_basis(model.l_scaled, input, layer.k_order);
    Matrix pre = basis[0] * layer.theta[0];
    for (int k = 1; k <= layer.k_order; ++k) {
      pre.noalias() += basis[static_cast<std::size_t>(k)] * layer.theta[static_cast<std::size_t>(k)];
    }
    input = pre.cwiseMax(0.0);
    tape.basis.push_back(std::move(basis));
    tape.pre.push_back(std::move(pre));
  }
  tape.output = std::move(input);
  return tape;
}

void branch_backward(const SiameseModel& model, const BranchTape& tape, const Matrix& d_output,
                     ModelGradients& grads) {
  if (tape.pre.size() != model.layers.size()) {
    throw ValidationError("branch_backward: tape does not match model depth");
  }
  Matrix d_act = d_output;
  for (std::size_t l = model.layers.size(); l-- > 0;) {
    const auto& layer = model.layers[l];
    const Matrix& pre = tape.pre[l];
    if (pre.cols() != layer.f_out || d_act.rows() != pre.rows() || d_act.cols() != pre.cols()) {
      throw ValidationError("branch_backward: tape shape does not match layer " + std::to_string(l));
    }
    const Matrix d_pre = (pre.array() > 0.0).select(d_act, 0.0);
    const auto& basis = tape.basis[l];
    for (int k = 0; k <= layer.k_order; ++k) {
      const auto ks = static_cast<std::size_t>(k);
      grads.theta[l][ks].noalias() += basis[ks].transpose() * d_pre;
    }
    if (l == 0) break;
    std::vector<Matrix> g;
    g.reserve(static_cast<std::size_t>(layer.k_order) + 1);
    for (const auto& theta : layer.theta) g.push_back(d_pre * theta.transpose());
    d_act = chebyshev_combine(model.l_scaled, g);
  }
}

HeadTape head_forward(const SiameseModel& model, const Matrix& ya, const Matrix& yb, bool same_site,
                      const Vector& dropout_scale) {
  const Eigen::Index r = model.num_nodes();
  HeadTape head;
  head.merge = ya.cwiseProduct(yb).rowwise().sum();
  head.fc_input.resize(r + 1);
  head.fc_input.head(r) = head.merge;
  head.fc_input(r) = same_site ? 1.0 : 0.0;
  head.dropout_scale = dropout_scale;
  if (dropout_scale.size() != 0) head.fc_input.array() *= dropout_scale.array();
  head.pre_sigmoid = model.fc_weights.dot(head.fc_input) + model.fc_bias;
  head.similarity = sigmoid(head.pre_sigmoid);
  return head;
}

std::pair<Matrix, Matrix> head_backward(const SiameseModel& model, const Matrix& ya,
                                        const Matrix& yb, const HeadTape& head, double d_similarity,
                                        ModelGradients& grads) {
  const Eigen::Index r = model.num_nodes();
  const double s = head.similarity;
  const double d_pre = d_similarity * s * (1.0 - s);
  grads.fc_weights.noalias() += d_pre * head.fc_input;
  grads.fc_bias += d_pre;

  Vector d_input = d_pre * model.fc_weights;
  if (head.dropout_scale.size() != 0) d_input.array() *= head.dropout_scale.array();
  const Vector d_merge = d_input.head(r);
  return {d_merge.asDiagonal() * yb, d_merge.asDiagonal() * ya};
}

Vector sample_dropout_scale(Eigen::Index size, double keep_prob, Rng& rng) {
  if (!(keep_prob > 0.0 && keep_prob <= 1.0)) {
    throw ValidationError("dropout keep probability must lie in (0, 1]");
  }
  Vector scale(size);
  for (Eigen::Index i = 0; i < size; ++i) scale(i) = rng.bernoulli(keep_prob) ? 1.0 / keep_prob : 0.0;
  return scale;
}

ForwardResult siamese_forward(const SiameseModel& model, const Matrix& xa, const Matrix& xb,
                              bool same_site, Mode mode, Rng* rng, double keep_prob) {
  ForwardResult result;
  auto& tape = result.tape;
  tape.a = branch_forward(model, xa);
  tape.b = branch_forward(model, xb);
  for (const auto& layer : model.layers) tape.layer_shapes.emplace_back(layer.f_in, layer.f_out);

  Vector scale;
  if (mode == Mode::train) {
    if (rng == nullptr) throw ValidationError("siamese_forward: train mode needs an rng");
    scale = sample_dropout_scale(model.num_nodes() + 1, keep_prob, *rng);
  }
  tape.head = head_forward(model, tape.a.output, tape.b.output, same_site, scale);
  result.similarity = tape.head.similarity;
  return result;
}

ModelGradients siamese_backward(const SiameseModel& model, const ForwardTape& tape,
                                double d_similarity) {
  bool shapes_ok = tape.layer_shapes.size() == model.layers.size() &&
                   tape.head.fc_input.size() == model.fc_weights.size();
  for (std::size_t l = 0; shapes_ok && l < model.layers.size(); ++l) {
    shapes_ok = tape.layer_shapes[l] ==
                std::pair<int, int>{model.layers[l].f_in, model.layers[l].f_out};
  }
  if (!shapes_ok) throw ValidationError("siamese_backward: tape was produced by a different model");

  ModelGradients grads = ModelGradients::zeros_like(model);
  auto [d_a, d_b] = head_backward(model, tape.a.output, tape.b.output, tape.head, d_similarity, grads);
  branch_backward(model, tape.a, d_a, grads);
  branch_backward(model, tape.b, d_b, grads);
  return grads;
}

Matrix embed(const SiameseModel& model, const Matrix& x) {
  if (x.rows() != model.num_nodes()) {
    throw ValidationError("signal has " + std::to_string(x.rows()) + " nodes, model expects " +
                          std::to_string(model.num_nodes()));
  }
  Matrix h = x;
  for (const auto& layer : model.layers) h = gcn_layer_forward(layer, model.l_scaled, h).cwiseMax(0.0);
  return h;
}

double similarity_from_embeddings(const SiameseModel& model, const Matrix& ya, const Matrix& yb,
                                  bool same_site) {
  return head_forward(model, ya, yb, same_site, Vector()).similarity;
}

double similarity(const SiameseModel& model, const Matrix& xa, const Matrix& xb, bool same_site) {
  return similarity_from_embeddings(model, embed(model, xa), embed(model, xb), same_site);
}

}  // namespace siamgcn
