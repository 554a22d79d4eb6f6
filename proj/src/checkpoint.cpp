#include "siamgcn/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <fstream>

#include <json.hpp>

namespace siamgcn {

using json = nlohmann::ordered_json;

namespace {

constexpr const char* kFormat = "siamgcn-checkpoint";
constexpr int kVersion = 1;

std::uint64_t fnv1a(std::uint64_t hash, std::uint64_t word) {
  for (int i = 0; i < 8; ++i) {
    hash ^= (word >> (8 * i)) & 0xffU;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

json matrix_to_json(const Matrix& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out.push_back(m(i, j));
  }
  return out;
}

Matrix matrix_from_json(const json& values, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!values.is_array() || static_cast<Eigen::Index>(values.size()) != rows * cols) {
    throw ValidationError("checkpoint: " + what + " has the wrong number of entries");
  }
  Matrix m(rows, cols);
  std::size_t pos = 0;
  for (Eigen::Index i = 0; i < rows; ++i) {
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = values.at(pos++).get<double>();
  }
  return m;
}

}  // namespace

std::string graph_hash(const Adjacency& adjacency) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  h = fnv1a(h, static_cast<std::uint64_t>(adjacency.size()));
  for (Eigen::Index i = 0; i < adjacency.w.rows(); ++i) {
    for (Eigen::Index j = 0; j < adjacency.w.cols(); ++j) h = fnv1a(h, std::bit_cast<std::uint64_t>(adjacency.w(i, j)));
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  const SiameseModel& model = checkpoint.model;
  json doc;
  doc["format"] = kFormat;
  doc["version"] = kVersion;
  doc["graph_hash"] = checkpoint.graph_hash;
  doc["seed"] = checkpoint.seed;
  doc["epoch"] = checkpoint.epoch;
  doc["num_nodes"] = model.num_nodes();
  doc["k_order"] = model.k_order();
  doc["theta_layout"] = "row-major (f_in, f_out, k)";
  json layers = json::array();
  for (const auto& layer : model.layers) {
    json theta = json::array();
    for (int i = 0; i < layer.f_in; ++i) {
      for (int j = 0; j < layer.f_out; ++j) {
        for (int k = 0; k <= layer.k_order; ++k) theta.push_back(layer.theta[static_cast<std::size_t>(k)](i, j));
      }
    }
    layers.push_back({{"f_in", layer.f_in}, {"f_out", layer.f_out}, {"theta", std::move(theta)}});
  }
  doc["layers"] = std::move(layers);
  doc["fc_weights"] = matrix_to_json(model.fc_weights.transpose());
  doc["fc_bias"] = model.fc_bias;
  doc["l_scaled"] = matrix_to_json(model.l_scaled);

  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write checkpoint: " + path.string());
  out << doc.dump(1) << '\n';
  if (!out) throw ValidationError("checkpoint write failed: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open checkpoint: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint " + path.string() + ": " + e.what());
  }
  try {
    if (doc.at("format").get<std::string>() != kFormat) throw ValidationError("not a siamgcn checkpoint");
    if (doc.at("version").get<int>() != kVersion) {
      throw ValidationError("unsupported checkpoint version " + std::to_string(doc.at("version").get<int>()));
    }
    Checkpoint cp;
    cp.graph_hash = doc.at("graph_hash").get<std::string>();
    cp.seed = doc.at("seed").get<std::uint64_t>();
    cp.epoch = doc.at("epoch").get<int>();
    const auto r = doc.at("num_nodes").get<Eigen::Index>();
    const int k_order = doc.at("k_order").get<int>();
    SiameseModel& model = cp.model;
    for (const auto& jl : doc.at("layers")) {
      GcnLayerParams layer;
      layer.f_in = jl.at("f_in").get<int>();
      layer.f_out = jl.at("f_out").get<int>();
      layer.k_order = k_order;
      const auto& theta = jl.at("theta");
      const auto expected = static_cast<std::size_t>(layer.f_in) * static_cast<std::size_t>(layer.f_out) *
                            static_cast<std::size_t>(k_order + 1);
      if (theta.size() != expected) throw ValidationError("layer theta has the wrong number of entries");
      for (int k = 0; k <= k_order; ++k) layer.theta.emplace_back(layer.f_in, layer.f_out);
      std::size_t pos = 0;
      for (int i = 0; i < layer.f_in; ++i) {
        for (int j = 0; j < layer.f_out; ++j) {
          for (int k = 0; k <= k_order; ++k) layer.theta[static_cast<std::size_t>(k)](i, j) = theta.at(pos++).get<double>();
        }
      }
      model.layers.push_back(std::move(layer));
    }
    model.fc_weights = matrix_from_json(doc.at("fc_weights"), 1, r + 1, "fc_weights").transpose();
    model.fc_bias = doc.at("fc_bias").get<double>();
    model.l_scaled = matrix_from_json(doc.at("l_scaled"), r, r, "l_scaled");
    return cp;
  } catch (const json::exception& e) {
    throw ValidationError("checkpoint " + path.string() + ": " + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError("checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace siamgcn
