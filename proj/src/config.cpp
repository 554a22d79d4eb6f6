#include "siamgcn/config.hpp"

#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>

#include "siamgcn/csv.hpp"

namespace siamgcn {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::string unquote(const std::string& s) {
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') return s.substr(1, s.size() - 2);
  return s;
}

long long to_int(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ValidationError(key + ": expected an integer, got '" + v + "'");
  return out;
}

unsigned long long to_uint(const std::string& key, const std::string& v) {
  if (!v.empty() && v.front() == '-') throw ValidationError(key + ": must be non-negative");
  std::size_t used = 0;
  unsigned long long out = 0;
  try {
    out = std::stoull(v, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != v.size() || v.empty()) throw ValidationError(key + ": expected an integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) { return csv::parse_double(v, key); }

std::string lambda_name(LambdaMaxMethod m) {
  switch (m) {
    case LambdaMaxMethod::exact: return "exact";
    case LambdaMaxMethod::power_iteration: return "power";
    case LambdaMaxMethod::upper_bound: return "bound";
  }
  return "exact";
}

struct Field {
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

// Order here is the order of the echoed config.
const std::vector<std::pair<std::string, Field>>& fields() {
  using F = Field;
  auto str = [](std::string RunConfig::*m) {
    return F{[m](RunConfig& c, const std::string&, const std::string& v) { c.*m = unquote(v); },
             [m](const RunConfig& c) { return "\"" + c.*m + "\""; }};
  };
  auto num = [](auto getter) {
    return F{[getter](RunConfig& c, const std::string& k, const std::string& v) {
               auto& ref = getter(c);
               using T = std::remove_reference_t<decltype(ref)>;
               if constexpr (std::is_floating_point_v<T>) {
                 ref = to_double(k, v);
               } else if constexpr (std::is_unsigned_v<T>) {
                 ref = static_cast<T>(to_uint(k, v));
               } else {
                 const long long x = to_int(k, v);
                 if (x < std::numeric_limits<T>::min() || x > std::numeric_limits<T>::max()) {
                   throw ValidationError(k + ": out of range");
                 }
                 ref = static_cast<T>(x);
               }
             },
             [getter](const RunConfig& c) {
               auto& ref = getter(const_cast<RunConfig&>(c));
               using T = std::remove_reference_t<decltype(ref)>;
               if constexpr (std::is_floating_point_v<T>) {
                 return csv::format_double(ref);
               } else {
                 return std::to_string(ref);
               }
             }};
  };
  static const std::vector<std::pair<std::string, Field>> table = {
      {"paths.atlas", str(&RunConfig::atlas)},
      {"paths.manifest", str(&RunConfig::manifest)},
      {"paths.output", str(&RunConfig::output)},
      {"graph.k", num([](RunConfig& c) -> int& { return c.graph_k; })},
      {"graph.weight_mode",
       F{[](RunConfig& c, const std::string&, const std::string& v) { c.weight_mode = parse_weight_mode(unquote(v)); },
         [](const RunConfig& c) { return "\"" + to_string(c.weight_mode) + "\""; }}},
      {"graph.lambda_max",
       F{[](RunConfig& c, const std::string& k, const std::string& v) {
           const std::string s = unquote(v);
           if (s == "exact") c.lambda_max = LambdaMaxMethod::exact;
           else if (s == "power") c.lambda_max = LambdaMaxMethod::power_iteration;
           else if (s == "bound") c.lambda_max = LambdaMaxMethod::upper_bound;
           else throw ValidationError(k + ": expected exact, power or bound");
         },
         [](const RunConfig& c) { return "\"" + lambda_name(c.lambda_max) + "\""; }}},
      {"model.widths",
       F{[](RunConfig& c, const std::string& k, const std::string& v) {
           c.widths.clear();
           for (const auto& part : csv::split_line(unquote(v))) c.widths.push_back(static_cast<int>(to_int(k, part)));
         },
         [](const RunConfig& c) {
           std::string s = "\"";
           for (std::size_t i = 0; i < c.widths.size(); ++i) s += (i ? "," : "") + std::to_string(c.widths[i]);
           return s + "\"";
         }}},
      {"model.k_order", num([](RunConfig& c) -> int& { return c.k_order; })},
      {"loss.margin", num([](RunConfig& c) -> double& { return c.train.loss.margin; })},
      {"loss.lambda", num([](RunConfig& c) -> double& { return c.train.loss.lambda_weight; })},
      {"loss.l2", num([](RunConfig& c) -> double& { return c.train.loss.l2_coeff; })},
      {"train.epochs", num([](RunConfig& c) -> int& { return c.train.epochs; })},
      {"train.batch_size", num([](RunConfig& c) -> std::size_t& { return c.train.batch_size; })},
      {"train.learning_rate", num([](RunConfig& c) -> double& { return c.train.learning_rate; })},
      {"train.dropout", num([](RunConfig& c) -> double& { return c.train.dropout; })},
      {"train.seed", num([](RunConfig& c) -> std::uint64_t& { return c.train.seed; })},
      {"train.pair_budget", num([](RunConfig& c) -> std::size_t& { return c.pair_budget; })},
      {"train.test_fraction", num([](RunConfig& c) -> double& { return c.test_fraction; })},
      {"train.checkpoint_every", num([](RunConfig& c) -> int& { return c.train.checkpoint_every; })},
      {"train.center_bias",
       F{[](RunConfig& c, const std::string& k, const std::string& v) {
           const std::string s = unquote(v);
           if (s == "true") c.train.center_bias = true;
           else if (s == "false") c.train.center_bias = false;
           else throw ValidationError(k + ": expected true or false");
         },
         [](const RunConfig& c) { return std::string(c.train.center_bias ? "true" : "false"); }}},
      {"eval.knn_k", num([](RunConfig& c) -> int& { return c.eval.knn_k; })},
      {"eval.variance_keep", num([](RunConfig& c) -> double& { return c.eval.variance_keep; })},
      {"eval.n_perm", num([](RunConfig& c) -> int& { return c.eval.n_perm; })},
      {"eval.seed", num([](RunConfig& c) -> std::uint64_t& { return c.eval.seed; })},
      {"synth.subjects", num([](RunConfig& c) -> int& { return c.synth_subjects; })},
      {"synth.rois", num([](RunConfig& c) -> int& { return c.synth_rois; })},
      {"synth.timepoints", num([](RunConfig& c) -> int& { return c.synth_timepoints; })},
      {"synth.effect", num([](RunConfig& c) -> double& { return c.synth_effect; })},
      {"synth.seed", num([](RunConfig& c) -> std::uint64_t& { return c.synth_seed; })},
  };
  return table;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& [name, field] : fields()) {
    if (name == key) {
      field.set(*this, key, trim(value));
      return;
    }
  }
  throw ValidationError("unknown config key '" + key + "'");
}

void RunConfig::validate() const {
  if (graph_k < 1) throw ValidationError("graph.k must be >= 1");
  if (widths.empty()) throw ValidationError("model.widths must list at least one layer");
  for (int w : widths) {
    if (w < 1) throw ValidationError("model.widths entries must be positive");
  }
  if (k_order < 0) throw ValidationError("model.k_order must be >= 0");
  train.validate();
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw ValidationError("train.test_fraction must lie in (0, 1)");
  if (eval.knn_k < 1) throw ValidationError("eval.knn_k must be >= 1");
  if (!(eval.variance_keep > 0.0 && eval.variance_keep <= 1.0)) throw ValidationError("eval.variance_keep must lie in (0, 1]");
  if (eval.n_perm < 1) throw ValidationError("eval.n_perm must be >= 1");
  if (synth_subjects < 4 || synth_subjects % 2) throw ValidationError("synth.subjects must be even and >= 4");
  if (synth_rois < 2 || synth_timepoints < 2) throw ValidationError("synth.rois and synth.timepoints must be >= 2");
  if (!(synth_effect >= 0.0)) throw ValidationError("synth.effect must be >= 0");
}

std::string RunConfig::dump() const {
  std::ostringstream out;
  std::string section;
  for (const auto& [name, field] : fields()) {
    const auto dot = name.find('.');
    const std::string sec = name.substr(0, dot);
    if (sec != section) {
      if (!section.empty()) out << '\n';
      out << '[' << sec << "]\n";
      section = sec;
    }
    out << name.substr(dot + 1) << " = " << field.get(*this) << '\n';
  }
  return out.str();
}

void parse_config(const std::string& text, RunConfig& config, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') throw ValidationError(where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ValidationError(where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    try {
      config.set(full, trim(line.substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(where + e.what());
    }
  }
}

void load_config(const std::filesystem::path& path, RunConfig& config) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  parse_config(buf.str(), config, path.string());
}

}  // namespace siamgcn
