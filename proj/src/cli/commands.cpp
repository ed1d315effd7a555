#include "shredlab/cli.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "shredlab/errors.hpp"
#include "shredlab/nn/checkpoint.hpp"
#include "shredlab/train.hpp"

#ifndef SHREDLAB_VERSION
#define SHREDLAB_VERSION "0.1.0"
#endif

namespace shredlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

std::string checksum(std::span<const std::uint8_t> bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SpatioTemporalField generate_from_spec(const json& spec) {
  if (!spec.is_object()) throw ConfigError("generator spec must be a JSON object");
  if (!spec.contains("kind")) throw ConfigError("generator spec: missing 'kind'");
  if (!spec.contains("grid_dims")) throw ConfigError("generator spec: missing 'grid_dims'");
  if (!spec.contains("n_time")) throw ConfigError("generator spec: missing 'n_time'");
  try {
    return gen_synthetic(spec.at("kind").get<std::string>(), spec.at("grid_dims").get<std::vector<std::size_t>>(),
                         spec.at("n_time").get<std::size_t>(), spec.value("params", json::object()),
                         spec.value("seed", std::uint64_t{0}), spec.value("dt", 1.0));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("generator spec: ") + e.what());
  }
}

SpatioTemporalField load_dataset(const json& dataset, const fs::path& base_dir) {
  if (dataset.is_object()) return generate_from_spec(dataset);
  if (!dataset.is_string()) throw ConfigError("config: 'dataset' must be a path or a generator spec");
  fs::path p = dataset.get<std::string>();
  if (p.is_relative()) p = base_dir / p;
  if (!fs::exists(p)) throw ConfigError("dataset not found: " + p.string());
  return load_field(p);
}

void apply_overrides(json& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + o + "'");
    std::string key = o.substr(0, eq);
    const std::string raw = o.substr(eq + 1);
    json value;
    try {
      value = json::parse(raw);
    } catch (const json::exception&) {
      value = raw;
    }
    std::string pointer = "/";
    for (char c : key) pointer += c == '.' ? '/' : c;
    config[json::json_pointer(pointer)] = value;
  }
}

namespace {

json read_json(const fs::path& p) {
  std::ifstream f(p);
  if (!f) throw ConfigError("cannot open " + p.string());
  try {
    return json::parse(f);
  } catch (const json::exception& e) {
    throw ConfigError(p.string() + ": " + e.what());
  }
}

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p, std::ios::binary);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot write " + p.string());
  f << text;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(2) + "\n"); }

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

bool use_f64() {
  const char* p = std::getenv("SHREDLAB_PRECISION");
  if (!p || std::string(p).empty() || std::string(p) == "f32") return false;
  if (std::string(p) == "f64") return true;
  throw ConfigError("SHREDLAB_PRECISION must be f32 or f64, got '" + std::string(p) + "'");
}

/// Dataset entries that are paths become absolute, so checkpoints can be evaluated from anywhere.
json resolved_dataset(const json& dataset, const fs::path& base_dir) {
  if (!dataset.is_string()) return dataset;
  fs::path p = dataset.get<std::string>();
  if (p.is_relative()) p = base_dir / p;
  return fs::absolute(p).lexically_normal().string();
}

std::string stats_line(const SpatioTemporalField& f) {
  double lo = 0, hi = 0, sum = 0;
  std::size_t n = 0;
  bool first = true;
  for (std::size_t t = 0; t < f.n_time; ++t) {
    for (std::size_t c = 0; c < f.n_cells(); ++c) {
      if (!f.mask[c]) continue;
      const double v = f.at(t, c);
      lo = first ? v : std::min(lo, v);
      hi = first ? v : std::max(hi, v);
      first = false;
      sum += v;
      ++n;
    }
  }
  std::ostringstream os;
  os << "min " << lo << ", max " << hi << ", mean " << (n ? sum / static_cast<double>(n) : 0.0);
  return os.str();
}

std::string grid_string(const std::vector<std::size_t>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) s += (i ? "x" : "") + std::to_string(dims[i]);
  return s;
}

// ---------------------------------------------------------------------------

int cmd_generate(const fs::path& spec_path, const fs::path& out_path, std::ostream& out) {
  const SpatioTemporalField f = generate_from_spec(read_json(spec_path));
  save_field(f, out_path);
  out << "wrote " << out_path.string() << ": " << f.name << " grid " << grid_string(f.grid_dims) << ", n_time "
      << f.n_time << ", valid cells " << f.n_valid() << ", " << stats_line(f) << "\n";
  return kExitOk;
}

/// Config file or manifest (whose "config" entry is used).
std::pair<train::TrainConfig, json> load_train_config(const fs::path& path, const std::vector<std::string>& overrides) {
  json j = read_json(path);
  if (j.contains("config") && j.at("config").is_object()) j = j.at("config");
  apply_overrides(j, overrides);
  j["dataset"] = resolved_dataset(j.value("dataset", json()), path.parent_path());
  train::TrainConfig cfg;
  try {
    cfg = j.get<train::TrainConfig>();
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  cfg.validate();
  return {cfg, json(cfg)};
}

json checkpoint_meta(const json& config, const model::ModelConfig& mc, const train::TrainRun& run,
                     std::uint64_t seed) {
  return {{"config", config},
          {"model", mc},
          {"seed", seed},
          {"best_epoch", run.best_epoch},
          {"best_val", run.best_val}};
}

template <typename T>
int train_impl(const train::TrainConfig& cfg, const json& cfg_json, const fs::path& out_dir, std::ostream& out) {
  const std::string started = utc_now();
  const SpatioTemporalField field = load_dataset(cfg.dataset, fs::current_path());
  fs::create_directories(out_dir);
  auto result = train::run_seed<T>(field, cfg, cfg.seed, [&](int e, double tl, double vl) {
    out << "epoch " << e << " train " << tl << " val " << vl << "\n";
  });
  const auto& run = result.run;

  std::ostringstream losses;
  losses.precision(10);
  losses << "epoch,train_loss,val_loss\n";
  for (std::size_t i = 0; i < run.val_losses.size(); ++i) {
    losses << i + 1 << ',' << run.train_losses[i] << ',' << run.val_losses[i] << '\n';
  }
  write_text(out_dir / "losses.csv", losses.str());
  nn::save_checkpoint(out_dir / "checkpoint.ckpt", result.model.params(),
                      checkpoint_meta(cfg_json, result.model.config(), run, cfg.seed));
  write_json(out_dir / "metrics.json",
             {{"best_val", run.best_val}, {"test_mse", run.test_mse}, {"best_epoch", run.best_epoch}});
  json outputs = {{"losses", "losses.csv"}, {"checkpoint", "checkpoint.ckpt"}, {"metrics", "metrics.json"}};
  if (run.system) {
    write_text(out_dir / "odes.txt", sindy::format_system(*run.system));
    write_json(out_dir / "odes.json", sindy::system_to_json(*run.system));
    outputs["odes_text"] = "odes.txt";
    outputs["odes_json"] = "odes.json";
  }
  write_json(out_dir / "manifest.json", {{"config", cfg_json},
                                         {"build", std::string("shredlab ") + SHREDLAB_VERSION},
                                         {"dataset_checksum", checksum(encode_field(field))},
                                         {"seed", cfg.seed},
                                         {"precision", sizeof(T) == 4 ? "f32" : "f64"},
                                         {"started_at", started},
                                         {"finished_at", utc_now()},
                                         {"outputs", outputs}});
  out << "best epoch " << run.best_epoch << " best_val " << run.best_val << " test_mse " << run.test_mse << "\n";
  return kExitOk;
}

template <typename T>
int sweep_impl(const train::SweepGrid& grid, const fs::path& out_dir, int jobs, std::ostream& out,
               std::ostream& err) {
  const SpatioTemporalField field = load_dataset(grid.base.dataset, fs::current_path());
  fs::create_directories(out_dir / "runs");
  auto runner = [&](const train::TrainConfig& cfg, const train::SweepCell& cell, std::uint64_t seed) {
    auto r = train::run_seed<T>(field, cfg, seed);
    char name[160];
    std::snprintf(name, sizeof name, "%s_%s_L%d_lr%g_s%llu.ckpt", cell.encoder.c_str(), cell.decoder.c_str(),
                  cell.n_layers, cell.lr, static_cast<unsigned long long>(seed));
    const fs::path ck = out_dir / "runs" / name;
    nn::save_checkpoint(ck, r.model.params(), checkpoint_meta(json(cfg), r.model.config(), r.run, seed));
    train::SweepRow row;
    row.best_val = r.run.best_val;
    row.test_mse = r.run.test_mse;
    row.params = r.model.params().n_scalars();
    row.checkpoint_bytes = static_cast<std::size_t>(fs::file_size(ck));
    row.wall_s = r.run.wall_s;
    return row;
  };
  const auto results = train::run_sweep(grid, runner, jobs);
  const auto agg = train::aggregate(results.rows);
  train::write_results_csv(out_dir / "results.csv", results.rows);
  train::write_aggregate_csv(out_dir / "aggregate.csv", agg);
  train::write_aggregate_csv(out_dir / "top12.csv", train::top_transformers(agg, 12));
  train::write_failures_csv(out_dir / "failures.csv", results.failures);
  for (const auto& f : results.failures) {
    err << "run failed: " << f.cell.encoder << "/" << f.cell.decoder << " L" << f.cell.n_layers << " lr " << f.cell.lr
        << " seed " << f.seed << ": " << f.error << "\n";
  }
  out << results.rows.size() << " runs succeeded, " << results.failures.size() << " failed\n";
  return results.rows.empty() ? kExitNumerical : kExitOk;
}

template <typename T>
int eval_impl(const nn::Checkpoint& ck, const std::string& split, std::ostream& out) {
  const auto cfg = ck.meta.at("config").get<train::TrainConfig>();
  const auto seed = ck.meta.at("seed").get<std::uint64_t>();
  const SpatioTemporalField field = load_dataset(cfg.dataset, fs::current_path());
  const SeedSet seeds = derive_seeds(seed);
  const auto data = train::prepare_data<T>(field, cfg, seeds.data);
  model::ShredModel<T> m(ck.meta.at("model").get<model::ModelConfig>(), ck.init_seed);
  nn::restore_params(m.params(), ck);
  const train::SplitData<T>& s = split == "train" ? data.train : split == "val" ? data.val : data.test;
  const double mse = train::evaluate(m, s);
  out << json{{"split", split}, {"mse", mse}}.dump() << "\n";
  return kExitOk;
}

int cmd_extract(const fs::path& ck_path, const fs::path& out_dir, std::ostream& out) {
  const nn::Checkpoint ck = nn::load_checkpoint(ck_path);
  if (!ck.meta.contains("model")) throw ConfigError("checkpoint carries no model config");
  const auto mc = ck.meta.at("model").get<model::ModelConfig>();
  if (mc.encoder.variant != model::EncoderVariant::transformer_sindy) {
    throw ConfigError("extract: model encoder is '" + model::encoder_label(mc.encoder) +
                      "', which has no SINDy-Attention layers");
  }
  sindy::SymbolicSystem sys;
  for (int l = 0; l < mc.encoder.n_layers; ++l) {
    for (int h = 0; h < mc.encoder.n_heads; ++h) {
      const auto& t = ck.at(model::head_xi_name(l, h));
      const nn::Matrix<double> mask = t.mask ? *t.mask : nn::Matrix<double>::Ones(t.value.rows(), t.value.cols());
      sys.heads.push_back(sindy::make_head_system(l, h, t.value, mask, mc.encoder.sindy.library, sys.precision));
    }
  }
  fs::create_directories(out_dir);
  const std::string text = sindy::format_system(sys);
  write_text(out_dir / "odes.txt", text);
  write_json(out_dir / "odes.json", sindy::system_to_json(sys));
  out << text;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"shredlab: sparse-sensor SHRED models with SINDy-Attention"};
  app.require_subcommand(1);

  std::string spec_path, stf_path;
  auto* gen = app.add_subcommand("generate", "Write a synthetic STF1 field from a generator spec");
  gen->add_option("spec", spec_path, "generator spec JSON")->required();
  gen->add_option("out", stf_path, "output .stf path")->required();

  std::string config_path, out_dir;
  std::vector<std::string> overrides;
  auto* tr = app.add_subcommand("train", "Train one model from a config (or a run manifest)");
  tr->add_option("config", config_path, "config or manifest JSON")->required();
  tr->add_option("-o,--out", out_dir, "run directory (default runs/<config name>)");
  tr->add_option("--set", overrides, "override a config key, e.g. --set lr=0.01 --set encoder.d_model=32");

  std::string grid_path, sweep_out;
  int jobs = 1;
  std::vector<std::string> sweep_overrides;
  auto* sw = app.add_subcommand("sweep", "Train every cell of a hyperparameter grid");
  sw->add_option("grid", grid_path, "grid JSON")->required();
  sw->add_option("-o,--out", sweep_out, "output directory (default sweeps/<grid name>)");
  sw->add_option("-j,--jobs", jobs, "parallel runs")->check(CLI::PositiveNumber);
  sw->add_option("--set", sweep_overrides, "override a key of the grid JSON");

  std::string eval_ckpt, split = "test";
  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on one split");
  ev->add_option("checkpoint", eval_ckpt, "checkpoint file")->required();
  ev->add_option("--split", split, "train | val | test")->check(CLI::IsMember({"train", "val", "test"}));

  std::string ex_ckpt, ex_out;
  auto* ex = app.add_subcommand("extract", "Print the latent ODEs of a SINDy-Attention checkpoint");
  ex->add_option("checkpoint", ex_ckpt, "checkpoint file")->required();
  ex->add_option("-o,--out", ex_out, "output directory (default: checkpoint directory)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_generate(spec_path, stf_path, out);
    if (tr->parsed()) {
      auto [cfg, cfg_json] = load_train_config(config_path, overrides);
      const fs::path dir = out_dir.empty() ? fs::path("runs") / fs::path(config_path).stem() : fs::path(out_dir);
      return use_f64() ? train_impl<double>(cfg, cfg_json, dir, out) : train_impl<float>(cfg, cfg_json, dir, out);
    }
    if (sw->parsed()) {
      json j = read_json(grid_path);
      apply_overrides(j, sweep_overrides);
      if (j.contains("base")) {
        j["base"]["dataset"] = resolved_dataset(j["base"].value("dataset", json()), fs::path(grid_path).parent_path());
      }
      train::SweepGrid grid;
      try {
        grid = j.get<train::SweepGrid>();
      } catch (const json::exception& e) {
        throw ConfigError(grid_path + ": " + e.what());
      }
      grid.base.validate();
      const fs::path dir = sweep_out.empty() ? fs::path("sweeps") / fs::path(grid_path).stem() : fs::path(sweep_out);
      return use_f64() ? sweep_impl<double>(grid, dir, jobs, out, err) : sweep_impl<float>(grid, dir, jobs, out, err);
    }
    if (ev->parsed()) {
      const nn::Checkpoint ck = nn::load_checkpoint(eval_ckpt);
      if (!ck.meta.contains("config")) throw ConfigError("checkpoint carries no training config");
      return ck.dtype == "f64" ? eval_impl<double>(ck, split, out) : eval_impl<float>(ck, split, out);
    }
    if (ex->parsed()) {
      const fs::path dir = ex_out.empty() ? fs::path(ex_ckpt).parent_path() : fs::path(ex_out);
      return cmd_extract(ex_ckpt, dir.empty() ? fs::path(".") : dir, out);
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  } catch (const json::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
  return kExitConfig;
}

}  // namespace shredlab::cli
