#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <thread>
#include <tuple>

#include "shredlab/errors.hpp"
#include "shredlab/train.hpp"

namespace shredlab::train {

namespace {

auto cell_key(const SweepCell& c) { return std::make_tuple(c.encoder, c.decoder, c.n_layers, c.lr); }

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream f(path);
  if (!f) throw FormatError(FormatError::Kind::io, "cannot write " + path.string());
  return f;
}

bool is_transformer_label(const std::string& label) {
  return label == "t" || label == "sl-t" || label == "sa-t" || label == "sasl-t";
}

}  // namespace

SweepGrid SweepGrid::experiment1(TrainConfig base, std::vector<std::uint64_t> seeds) {
  SweepGrid g;
  g.base = std::move(base);
  g.encoders = model::all_encoder_labels();
  g.decoders = {"mlp", "cnn"};
  g.n_layers = {1, 2, 3, 4};
  g.lrs = {1e-2, 1e-3};
  g.seeds = std::move(seeds);
  return g;
}

void from_json(const nlohmann::json& j, SweepGrid& g) {
  g.base = j.at("base").get<TrainConfig>();
  const bool preset = j.value("preset", std::string()) == "experiment-1";
  if (preset) g = SweepGrid::experiment1(g.base, g.base.seeds);
  if (j.contains("encoders")) g.encoders = j.at("encoders").get<std::vector<std::string>>();
  if (j.contains("decoders")) g.decoders = j.at("decoders").get<std::vector<std::string>>();
  if (j.contains("n_layers")) g.n_layers = j.at("n_layers").get<std::vector<int>>();
  if (j.contains("lrs")) g.lrs = j.at("lrs").get<std::vector<double>>();
  g.seeds = j.value("seeds", g.base.seeds);
  if (g.encoders.empty() || g.decoders.empty() || g.n_layers.empty() || g.lrs.empty() || g.seeds.empty()) {
    throw ConfigError("sweep grid: every axis (encoders, decoders, n_layers, lrs, seeds) needs at least one value");
  }
}

std::vector<SweepCell> enumerate_cells(const SweepGrid& grid) {
  std::vector<SweepCell> cells;
  for (const auto& e : grid.encoders)
    for (const auto& d : grid.decoders)
      for (int l : grid.n_layers)
        for (double lr : grid.lrs) cells.push_back({e, d, l, lr});
  return cells;
}

TrainConfig cell_config(const SweepGrid& grid, const SweepCell& cell, std::uint64_t seed) {
  TrainConfig c = grid.base;
  model::apply_encoder_label(cell.encoder, c.encoder);
  c.encoder.n_layers = cell.n_layers;
  c.decoder.variant = model::decoder_variant_from_string(cell.decoder);
  c.lr = cell.lr;
  c.seed = seed;
  c.seeds = {seed};
  return c;
}

SweepResults run_sweep(const SweepGrid& grid, const CellRunner& runner, int jobs) {
  struct Task {
    SweepCell cell;
    std::uint64_t seed;
  };
  std::vector<Task> tasks;
  for (const auto& cell : enumerate_cells(grid)) {
    for (auto s : grid.seeds) tasks.push_back({cell, s});
  }
  std::vector<std::optional<SweepRow>> rows(tasks.size());
  std::vector<std::optional<std::string>> errors(tasks.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&] {
    for (std::size_t i = next++; i < tasks.size(); i = next++) {
      const Task& t = tasks[i];
      try {
        SweepRow row = runner(cell_config(grid, t.cell, t.seed), t.cell, t.seed);
        row.cell = t.cell;
        row.seed = t.seed;
        rows[i] = row;
      } catch (const std::exception& e) {
        errors[i] = e.what();
      }
    }
  };
  const int n_threads = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int i = 0; i < n_threads; ++i) threads.emplace_back(worker);
    for (auto& th : threads) th.join();
  }

  SweepResults out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    if (rows[i]) out.rows.push_back(*rows[i]);
    if (errors[i]) out.failures.push_back({tasks[i].cell, tasks[i].seed, *errors[i]});
  }
  return out;
}

std::vector<AggregateRow> aggregate(const std::vector<SweepRow>& rows) {
  std::vector<AggregateRow> out;
  std::map<decltype(cell_key(SweepCell{})), std::vector<const SweepRow*>> groups;
  std::vector<decltype(cell_key(SweepCell{}))> order;
  for (const auto& r : rows) {
    auto key = cell_key(r.cell);
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(&r);
  }
  std::sort(order.begin(), order.end());
  for (const auto& key : order) {
    const auto& g = groups[key];
    AggregateRow a;
    a.cell = g.front()->cell;
    a.n_runs = g.size();
    a.params = g.front()->params;
    for (const auto* r : g) {
      a.mean_test_mse += r->test_mse;
      a.mean_best_val += r->best_val;
    }
    a.mean_test_mse /= static_cast<double>(g.size());
    a.mean_best_val /= static_cast<double>(g.size());
    if (g.size() > 1) {
      double ss = 0.0;
      for (const auto* r : g) ss += (r->test_mse - a.mean_test_mse) * (r->test_mse - a.mean_test_mse);
      a.std_test_mse = std::sqrt(ss / static_cast<double>(g.size() - 1));
    }
    out.push_back(a);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AggregateRow& a, const AggregateRow& b) { return a.mean_test_mse < b.mean_test_mse; });
  return out;
}

std::vector<AggregateRow> top_transformers(const std::vector<AggregateRow>& agg, std::size_t n) {
  std::vector<AggregateRow> out;
  for (const auto& a : agg) {
    if (is_transformer_label(a.cell.encoder)) out.push_back(a);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const AggregateRow& a, const AggregateRow& b) { return a.mean_test_mse < b.mean_test_mse; });
  if (out.size() > n) out.resize(n);
  return out;
}

void write_results_csv(const std::filesystem::path& path, const std::vector<SweepRow>& rows) {
  auto f = open_csv(path);
  f << "encoder,decoder,n_layers,lr,seed,best_val,test_mse,params,checkpoint_bytes,wall_s\n";
  for (const auto& r : rows) {
    f << r.cell.encoder << ',' << r.cell.decoder << ',' << r.cell.n_layers << ',' << num(r.cell.lr) << ','
      << r.seed << ',' << num(r.best_val) << ',' << num(r.test_mse) << ',' << r.params << ','
      << r.checkpoint_bytes << ',' << num(r.wall_s) << '\n';
  }
}

void write_aggregate_csv(const std::filesystem::path& path, const std::vector<AggregateRow>& rows) {
  auto f = open_csv(path);
  f << "encoder,decoder,n_layers,lr,n_runs,mean_test_mse,std_test_mse,mean_best_val,params\n";
  for (const auto& a : rows) {
    f << a.cell.encoder << ',' << a.cell.decoder << ',' << a.cell.n_layers << ',' << num(a.cell.lr) << ','
      << a.n_runs << ',' << num(a.mean_test_mse) << ',' << num(a.std_test_mse) << ',' << num(a.mean_best_val)
      << ',' << a.params << '\n';
  }
}

void write_failures_csv(const std::filesystem::path& path, const std::vector<SweepFailure>& failures) {
  auto f = open_csv(path);
  f << "encoder,decoder,n_layers,lr,seed,error\n";
  for (const auto& x : failures) {
    std::string msg = x.error;
    std::replace(msg.begin(), msg.end(), '"', '\'');
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    f << x.cell.encoder << ',' << x.cell.decoder << ',' << x.cell.n_layers << ',' << num(x.cell.lr) << ','
      << x.seed << ",\"" << msg << "\"\n";
  }
}

}  // namespace shredlab::train
