#include "siamgcn/app.hpp"

#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include <json.hpp>

#include "siamgcn/checkpoint.hpp"
#include "siamgcn/csv.hpp"

namespace siamgcn::app {

using json = nlohmann::ordered_json;

namespace {

fs::path output_dir(const RunConfig& config, const fs::path& workdir) {
  fs::path out = workdir / config.output;
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ValidationError("cannot create output directory " + out.string() + ": " + ec.message());
  return out;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  out << text;
  if (!out) throw ValidationError("write failed: " + path.string());
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string() + " (did the previous step run?)");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
}

void echo_config(const RunConfig& config, const fs::path& out, const std::string& command) {
  write_text(out / ("config." + command + ".toml"), config.dump());
}

struct LoadedGraph {
  Adjacency adjacency;
  std::string hash;
};

LoadedGraph load_graph(const fs::path& out) {
  const json meta = read_json(out / "graph" / "graph.json");
  LoadedGraph g;
  g.adjacency.w = csv::read_matrix(out / "graph" / "adjacency.csv");
  g.adjacency.validate();
  g.hash = graph_hash(g.adjacency);
  if (meta.at("graph_hash").get<std::string>() != g.hash) {
    throw ValidationError("graph/adjacency.csv does not match graph/graph.json (hash mismatch)");
  }
  return g;
}

std::vector<GraphSignal> load_signals(const fs::path& out, Eigen::Index r) {
  auto signals = load_profiles(out / "profiles" / "index.csv", r);
  if (signals.empty()) throw ValidationError("no preprocessed subjects found");
  return signals;
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> load_split(const fs::path& out,
                                                                         const std::vector<GraphSignal>& cohort) {
  const json split = read_json(out / "model" / "split.json");
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < cohort.size(); ++i) index[cohort[i].subject_id] = i;
  auto resolve = [&](const json& ids) {
    std::vector<std::size_t> v;
    for (const auto& id : ids) {
      const auto it = index.find(id.get<std::string>());
      if (it == index.end()) throw ValidationError("split.json names unknown subject " + id.get<std::string>());
      v.push_back(it->second);
    }
    return v;
  };
  return {resolve(split.at("train")), resolve(split.at("test"))};
}

Matrix feature_rows(const std::vector<GraphSignal>& cohort, const std::vector<std::size_t>& members) {
  Matrix m;
  for (std::size_t i = 0; i < members.size(); ++i) {
    const Vector v = vectorize_profile(cohort[members[i]].features);
    if (i == 0) m.resize(static_cast<Eigen::Index>(members.size()), v.size());
    m.row(static_cast<Eigen::Index>(i)) = v.transpose();
  }
  return m;
}

json summary_json(const MetricSummary& s) {
  return {{"auc", s.auc},
          {"knn_accuracy", s.knn_accuracy},
          {"knn_accuracy_same_site", s.knn_accuracy_same_site},
          {"permutation_p_value", s.p_value},
          {"mean_distance_matching", s.mean_distance_matching},
          {"mean_distance_non_matching", s.mean_distance_non_matching}};
}

void write_roc_csv(const fs::path& path, const std::vector<RocPoint>& roc) {
  std::ostringstream s;
  s << "threshold,fpr,tpr\n";
  for (const auto& p : roc) {
    s << csv::format_double(p.threshold) << ',' << csv::format_double(p.fpr) << ',' << csv::format_double(p.tpr)
      << '\n';
  }
  write_text(path, s.str());
}

}  // namespace

void cmd_synth(const RunConfig& config, const fs::path& workdir) {
  config.validate();
  const fs::path out = output_dir(config, workdir);
  ensure_dir(out / "timeseries");

  const RoiAtlas atlas = synth_atlas(config.synth_rois, config.synth_seed);
  csv::write_matrix(out / "coords.csv", atlas.coords, {"x", "y", "z"});

  const auto cohort = synth_cohort(config.synth_subjects, config.synth_rois, config.synth_timepoints,
                                   config.synth_effect, config.synth_seed);
  std::vector<std::string> header;
  for (int i = 0; i < config.synth_rois; ++i) header.push_back("roi_" + std::to_string(i));
  std::ostringstream manifest;
  manifest << "subject_id,label,site_id,timeseries_path\n";
  for (const auto& rec : cohort) {
    const std::string rel = "timeseries/" + rec.subject_id + ".csv";
    csv::write_matrix(out / rel, rec.timeseries, header);
    manifest << rec.subject_id << ',' << rec.label << ',' << rec.site_id << ',' << rel << '\n';
  }
  write_text(out / "manifest.csv", manifest.str());
  echo_config(config, out, "synth");
}

void cmd_preprocess(const RunConfig& config, const fs::path& workdir) {
  config.validate();
  const RoiAtlas atlas = load_atlas(workdir / config.atlas);
  const auto cohort = load_cohort(workdir / config.manifest, atlas.size());
  if (cohort.empty()) throw ValidationError("cohort is empty; nothing to preprocess");

  std::vector<GraphSignal> signals;
  std::vector<std::string> failures;
  for (const auto& rec : cohort) {
    try {
      signals.push_back(to_graph_signal(rec));
    } catch (const ValidationError& e) {
      failures.emplace_back(e.what());
    }
  }
  if (!failures.empty()) {
    std::string msg = std::to_string(failures.size()) + " subject(s) failed validation:";
    for (const auto& f : failures) msg += "\n  " + f;
    throw ValidationError(msg);
  }

  const SpatialGraph graph = build_spatial_graph(atlas, config.graph_k, config.weight_mode);
  const Laplacian lap = normalized_laplacian(graph.adjacency, config.lambda_max);

  const fs::path out = output_dir(config, workdir);
  ensure_dir(out / "profiles");
  ensure_dir(out / "graph");
  std::ostringstream index;
  index << "subject_id,label,site_id,profile_path\n";
  for (const auto& s : signals) {
    const std::string name = s.subject_id + ".csv";
    csv::write_matrix(out / "profiles" / name, s.features);
    index << s.subject_id << ',' << s.label << ',' << s.site_id << ',' << name << '\n';
  }
  write_text(out / "profiles" / "index.csv", index.str());

  csv::write_matrix(out / "graph" / "adjacency.csv", graph.adjacency.w);
  csv::write_matrix(out / "graph" / "coords.csv", atlas.coords, {"x", "y", "z"});
  json meta;
  meta["format"] = "siamgcn-graph";
  meta["version"] = 1;
  meta["num_nodes"] = atlas.size();
  meta["k_neighbors"] = graph.k_neighbors;
  meta["weight_mode"] = to_string(graph.weight_mode);
  meta["lambda_max"] = lap.lambda_max;
  meta["graph_hash"] = graph_hash(graph.adjacency);
  write_text(out / "graph" / "graph.json", meta.dump(2) + "\n");
  echo_config(config, out, "preprocess");
}

void cmd_train(const RunConfig& config, const fs::path& workdir) {
  config.validate();
  const fs::path out = output_dir(config, workdir);
  const LoadedGraph graph = load_graph(out);
  const auto cohort = load_signals(out, graph.adjacency.size());

  const auto split = split_cohort(cohort, config.test_fraction, config.train.seed);
  const std::size_t budget = config.pair_budget ? config.pair_budget : default_pair_budget(split.train.size());
  const PairSet pairs = sample_pairs(cohort, split.train, budget, config.train.seed);

  Laplacian lap = normalized_laplacian(graph.adjacency, config.lambda_max);
  lap.lambda_max = safe_lambda_max(lap);
  ModelSpec spec;
  spec.input_features = static_cast<int>(cohort.front().features.cols());
  spec.widths = config.widths;
  spec.k_order = config.k_order;
  const SiameseModel init = init_model(rescale_laplacian(lap), spec, config.train.seed);

  ensure_dir(out / "model");
  json split_doc;
  split_doc["seed"] = config.train.seed;
  split_doc["test_fraction"] = config.test_fraction;
  split_doc["train"] = json::array();
  split_doc["test"] = json::array();
  for (std::size_t i : split.train) split_doc["train"].push_back(cohort[i].subject_id);
  for (std::size_t i : split.test) split_doc["test"].push_back(cohort[i].subject_id);
  write_text(out / "model" / "split.json", split_doc.dump(1) + "\n");
  echo_config(config, out, "train");

  auto on_checkpoint = [&](int epoch, const SiameseModel& model) {
    Checkpoint cp{model, graph.hash, config.train.seed, epoch};
    char name[48];
    std::snprintf(name, sizeof name, "checkpoint_epoch_%04d.json", epoch);
    save_checkpoint(out / "model" / name, cp);
    if (epoch == config.train.epochs) save_checkpoint(out / "model" / "checkpoint.json", cp);
  };
  const TrainResult result = train(init, cohort, pairs, config.train, on_checkpoint);

  std::ostringstream trace;
  trace << "epoch,mean_loss\n";
  for (std::size_t e = 0; e < result.loss_trace.size(); ++e) {
    trace << e + 1 << ',' << csv::format_double(result.loss_trace[e]) << '\n';
  }
  write_text(out / "model" / "loss_trace.csv", trace.str());
}

void write_report_json(const fs::path& path, const EvalReport& report, const RunConfig& config,
                       const std::string& hash) {
  json doc;
  doc["schema"] = "siamgcn-eval-report";
  doc["version"] = 1;
  doc["graph_hash"] = hash;
  doc["n_subjects"] = report.n_subjects;
  doc["n_pairs"] = report.n_pairs;
  doc["n_matching"] = report.n_matching;
  doc["n_non_matching"] = report.n_pairs - report.n_matching;
  doc["knn_k"] = report.knn_k;
  doc["pca_components"] = report.pca_components;
  doc["variance_keep"] = config.eval.variance_keep;
  doc["n_perm"] = config.eval.n_perm;
  doc["learned"] = summary_json(report.learned);
  doc["baseline"] = summary_json(report.baseline);
  json sites = json::array();
  for (const auto& s : report.sites) {
    sites.push_back({{"site_id", s.site_id},
                     {"n_subjects", s.n_subjects},
                     {"n_pairs", s.n_pairs},
                     {"learned", summary_json(s.learned)},
                     {"baseline", summary_json(s.baseline)}});
  }
  doc["sites"] = std::move(sites);
  write_text(path, doc.dump(2) + "\n");
}

EvalReport cmd_evaluate(const RunConfig& config, const fs::path& workdir) {
  config.validate();
  const fs::path out = output_dir(config, workdir);
  const LoadedGraph graph = load_graph(out);
  const Checkpoint cp = load_checkpoint(out / "model" / "checkpoint.json");
  if (cp.graph_hash != graph.hash) {
    throw ValidationError("checkpoint was trained on graph " + cp.graph_hash + " but the current graph is " +
                          graph.hash);
  }
  const auto cohort = load_signals(out, graph.adjacency.size());
  const auto [train_idx, test_idx] = load_split(out, cohort);

  const EvalReport report = evaluate(cp.model, cohort, train_idx, test_idx, config.eval);

  ensure_dir(out / "eval");
  write_report_json(out / "eval" / "report.json", report, config, graph.hash);
  write_roc_csv(out / "eval" / "roc_learned.csv", report.roc_learned);
  write_roc_csv(out / "eval" / "roc_baseline.csv", report.roc_baseline);
  std::ostringstream d;
  d << "subject_a,subject_b,learned_distance,baseline_distance,match,same_site\n";
  for (const auto& p : report.pairs) {
    d << cohort[p.a].subject_id << ',' << cohort[p.b].subject_id << ',' << csv::format_double(p.learned) << ','
      << csv::format_double(p.baseline) << ',' << (p.match ? 1 : 0) << ',' << (p.same_site ? 1 : 0) << '\n';
  }
  write_text(out / "eval" / "distances.csv", d.str());
  echo_config(config, out, "evaluate");
  return report;
}

void cmd_baseline(const RunConfig& config, const fs::path& workdir) {
  config.validate();
  const fs::path out = output_dir(config, workdir);
  std::vector<GraphSignal> cohort = load_profiles(out / "profiles" / "index.csv");
  if (cohort.empty()) throw ValidationError("no preprocessed subjects found");
  std::vector<std::size_t> train_idx, test_idx;
  if (fs::exists(out / "model" / "split.json")) {
    std::tie(train_idx, test_idx) = load_split(out, cohort);
  } else {
    const auto split = split_cohort(cohort, config.test_fraction, config.train.seed);
    train_idx = split.train;
    test_idx = split.test;
  }
  if (test_idx.size() < 2) throw ValidationError("baseline needs at least 2 test subjects");

  const PcaBasis basis = fit_pca(feature_rows(cohort, train_idx), config.eval.variance_keep);
  const Matrix dist = pca_euclidean_baseline(feature_rows(cohort, train_idx), feature_rows(cohort, test_idx),
                                             config.eval.variance_keep);
  ensure_dir(out / "baseline");
  std::ostringstream d;
  d << "subject_a,subject_b,baseline_distance,match,same_site\n";
  std::vector<double> scores;
  std::vector<std::uint8_t> match;
  for (std::size_t i = 0; i < test_idx.size(); ++i) {
    for (std::size_t j = i + 1; j < test_idx.size(); ++j) {
      const auto& a = cohort[test_idx[i]];
      const auto& b = cohort[test_idx[j]];
      const double dij = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      const bool m = a.label == b.label;
      d << a.subject_id << ',' << b.subject_id << ',' << csv::format_double(dij) << ',' << (m ? 1 : 0) << ','
        << (a.site_id == b.site_id ? 1 : 0) << '\n';
      scores.push_back(-dij);
      match.push_back(m ? 1 : 0);
    }
  }
  write_text(out / "baseline" / "distances.csv", d.str());

  Matrix masked = dist;
  masked.diagonal().setConstant(std::numeric_limits<double>::infinity());
  std::vector<int> labels;
  for (std::size_t i : test_idx) labels.push_back(cohort[i].label);
  const int k = std::min<int>(config.eval.knn_k, static_cast<int>(test_idx.size()) - 1);
  const auto pred = knn_classify(masked, labels, k);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == labels[i];

  json summary;
  summary["n_train"] = train_idx.size();
  summary["n_test"] = test_idx.size();
  summary["pca_components"] = basis.components.cols();
  summary["retained_variance"] = basis.retained_fraction;
  summary["knn_k"] = k;
  summary["knn_accuracy"] = static_cast<double>(correct) / static_cast<double>(pred.size());
  try {
    summary["auc"] = roc_auc(scores, match).auc;
  } catch (const ValidationError&) {
    summary["auc"] = nullptr;
  }
  write_text(out / "baseline" / "summary.json", summary.dump(2) + "\n");
  echo_config(config, out, "baseline");
}

double cmd_permtest(const RunConfig& config, const fs::path& workdir, const fs::path& distances,
                    const std::string& column) {
  config.validate();
  const fs::path in = distances.is_absolute() ? distances : workdir / distances;
  const auto rows = csv::read_rows(in);
  if (rows.size() < 2) throw ValidationError(in.string() + ": no data rows");
  const auto& header = rows.front();
  auto find = [&](const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    throw ValidationError(in.string() + ": no column named '" + name + "'");
  };
  const std::size_t value_col = find(column);
  const std::size_t match_col = find("match");
  std::vector<double> matching, non_matching;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const std::string where = in.string() + ":" + std::to_string(r + 1);
    if (rows[r].size() != header.size()) throw ValidationError(where + ": wrong number of fields");
    const double v = csv::parse_double(rows[r][value_col], where);
    (rows[r][match_col] == "1" ? matching : non_matching).push_back(v);
  }
  const double p = permutation_test(matching, non_matching, config.eval.n_perm, config.eval.seed);

  const fs::path out = output_dir(config, workdir);
  json doc;
  doc["distances"] = in.string();
  doc["column"] = column;
  doc["n_matching"] = matching.size();
  doc["n_non_matching"] = non_matching.size();
  doc["n_perm"] = config.eval.n_perm;
  doc["seed"] = config.eval.seed;
  doc["p_value"] = p;
  write_text(out / "permtest.json", doc.dump(2) + "\n");
  return p;
}

}  // namespace siamgcn::app
