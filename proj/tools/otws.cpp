// otws: command-line front end for solving, benchmarking and training.

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "otws/barycenter.hpp"
#include "otws/data.hpp"
#include "otws/exact_ot.hpp"
#include "otws/sinkhorn.hpp"
#include "otws/train.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace otws;

namespace {

constexpr int kUsageError = 2;
constexpr int kRuntimeError = 1;

std::string utc_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buffer;
}

// SHA-1 of "blob <size>\0<content>", the object id git assigns to a file.
std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (ctx == nullptr) throw Error("cannot allocate a digest context");
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest, &length);
  EVP_MD_CTX_free(ctx);
  std::ostringstream hex;
  for (unsigned int k = 0; k < length; ++k) hex << std::hex << std::setw(2) << std::setfill('0') << int(digest[k]);
  return hex.str();
}

std::string file_contents(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

std::string measures_bytes(const std::vector<DiscreteMeasure>& measures) {
  std::string bytes;
  for (const auto& m : measures)
    bytes.append(reinterpret_cast<const char*>(m.weights().data()), sizeof(double) * m.weights().size());
  return bytes;
}

int grid_side(int n) {
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(n))));
  if (side * side != n || n <= 0) throw InvalidArgument("--n must be a positive perfect square (a square grid)");
  return side;
}

std::vector<std::string> command_line;

struct Manifest {
  json doc;

  Manifest(const std::string& subcommand, const CLI::App& app) {
    doc["subcommand"] = subcommand;
    doc["config"] = app.get_subcommand(subcommand)->config_to_str(true, false);
    doc["argv"] = command_line;
    doc["started"] = utc_now();
    doc["inputs"] = json::array();
    doc["outputs"] = json::array();
  }
  void input(const std::string& name, const std::string& content) {
    doc["inputs"].push_back({{"name", name}, {"hash", git_blob_hash(content)}});
  }
  void output(const std::string& path) { doc["outputs"].push_back(path); }
  void write(const std::string& dir) {
    // The combined hash covers every input in order.
    std::string all;
    for (const auto& entry : doc["inputs"]) all += entry["name"].get<std::string>() + '\0' + entry["hash"].get<std::string>() + '\n';
    doc["input_hash"] = git_blob_hash(all);
    doc["finished"] = utc_now();
    const std::string path = (fs::path(dir) / "manifest.json").string();
    std::ofstream out(path);
    if (!out) throw IoError("cannot write " + path);
    out << doc.dump(2) << '\n';
  }
};

std::uint64_t resolve_seed(std::optional<std::uint64_t>& seed) {
  if (!seed) {
    seed = (static_cast<std::uint64_t>(std::random_device{}()) << 32) ^ std::random_device{}();
    std::cerr << "seed: " << *seed << '\n';
  }
  return *seed;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir + ": " + ec.message());
}

bool is_generated(const std::string& dataset) { return dataset == "random" || dataset == "random_r3"; }

// "random" / "random_r3" generate data; anything else is a raw_grid or IDX
// file, told apart by its magic bytes.
std::vector<DiscreteMeasure> load_measures(const std::string& dataset, long count, int n, std::uint64_t seed,
                                           Manifest& manifest) {
  DatasetSpec spec;
  spec.count = count;
  spec.seed = seed;
  if (is_generated(dataset)) {
    spec.kind = DatasetKind::random_r3;
    spec.rows = spec.cols = grid_side(n);
    auto measures = gen_random_r3(spec);
    manifest.input("random_r3", measures_bytes(measures));
    return measures;
  }
  const std::string content = file_contents(dataset);
  manifest.input(dataset, content);
  spec.path = dataset;
  spec.kind = content.rfind("OTG1", 0) == 0 ? DatasetKind::raw_grid : DatasetKind::idx_images;
  return load_dataset(spec);
}

CostMatrix cost_for(const DiscreteMeasure& m) { return build_cost(*m.geometry(), *m.geometry()); }

struct SinkhornFlags {
  double eps = 0.00025;
  long max_iters = 1000;
  long check_every = 25;
  std::optional<double> stop_mcv;
  std::string domain = "linear";

  SinkhornConfig config() const {
    SinkhornConfig c;
    c.eps = eps;
    c.max_iters = max_iters;
    c.check_every = check_every;
    c.stop_mcv = stop_mcv;
    c.domain = domain == "log" ? SinkhornDomain::log : SinkhornDomain::linear;
    return c;
  }
};

void add_sinkhorn_flags(CLI::App* cmd, SinkhornFlags& f) {
  cmd->add_option("--eps", f.eps, "Entropic regularization")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--max-iters", f.max_iters, "Maximum Sinkhorn iterations")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--check-every", f.check_every, "Iterations between MCV checks")->capture_default_str()->check(CLI::PositiveNumber);
  cmd->add_option("--stop-mcv", f.stop_mcv, "Stop once the marginal violation falls to this value");
  cmd->add_option("--domain", f.domain, "linear or log")->capture_default_str()->check(CLI::IsMember({"linear", "log"}));
}

// Runs Sinkhorn; a linear-domain overflow is retried in the log domain, which
// performs the same iterations without leaving the double range.
SinkhornTrace run_sinkhorn(const DiscreteMeasure& mu, const DiscreteMeasure& nu, const CostMatrix& cost,
                           const SinkhornConfig& config, const Vector& v0, bool& fell_back) {
  try {
    return sinkhorn_run(mu, nu, cost, config, v0);
  } catch (const NumericalFailure&) {
    if (config.domain == SinkhornDomain::log) throw;
    SinkhornConfig log_config = config;
    log_config.domain = SinkhornDomain::log;
    fell_back = true;
    return sinkhorn_run(mu, nu, cost, log_config, v0);
  }
}

// v0 for the chosen initialization. For the net, `setup_ns` receives the time
// spent on the prediction and the c-transform so traces can charge it.
Vector initial_scaling(const Approximator* approximator, const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                       const CostMatrix& cost, const SinkhornConfig& config, std::int64_t& setup_ns) {
  setup_ns = 0;
  if (!approximator) return Vector::Ones(nu.size());
  const auto start = std::chrono::steady_clock::now();
  Vector v0 = warm_start_vector(approximator->predict(mu, nu), cost, config);
  setup_ns = std::chrono::duration_cast<std::chrono::nanoseconds>(std::chrono::steady_clock::now() - start).count();
  return v0;
}

void charge_setup(SinkhornTrace& trace, std::int64_t setup_ns) {
  for (auto& cp : trace.checkpoints) cp.wall_time_ns += setup_ns;
}

void write_trace_rows(std::ostream& out, long instance, const std::string& init, const SinkhornTrace& trace,
                      double exact_value) {
  const std::vector<double> rel = relative_distance_error(trace, exact_value);
  for (std::size_t k = 0; k < trace.checkpoints.size(); ++k) {
    const auto& cp = trace.checkpoints[k];
    out << instance << ',' << init << ',' << cp.iteration << ',' << cp.mcv << ',' << rel[k] << ',' << cp.wall_time_ns
        << '\n';
  }
}

std::ofstream open_csv(const std::string& path, Manifest& manifest) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << std::setprecision(17);
  manifest.output(path);
  return out;
}

Approximator load_approximator(const std::string& path, Manifest& manifest) {
  if (path.empty()) throw InvalidArgument("--model is required for the net initialization");
  manifest.input(path, file_contents(path));
  return restore_models(load_checkpoint(path)).second;
}

}  // namespace

int main(int argc, char** argv) {
  command_line.assign(argv, argv + argc);
  CLI::App app{"Discrete optimal transport: exact solves, Sinkhorn with learned warm starts, training"};
  app.set_config("--config", "", "Read flags from a TOML/INI file mirroring the flag names");
  app.require_subcommand(1);

  std::optional<std::uint64_t> seed;
  int n = 196;
  std::string out_dir = ".";
  std::string dataset = "random";
  long count = 10;

  auto common = [&](CLI::App* cmd, bool with_dataset) {
    cmd->add_option("--seed", seed, "Random seed (derived and printed when absent)");
    cmd->add_option("--n", n, "Atoms per measure (a square grid)")->capture_default_str();
    cmd->add_option("--out", out_dir, "Output directory")->capture_default_str();
    if (with_dataset) {
      cmd->add_option("--dataset", dataset, "random, or a raw_grid / IDX file")->capture_default_str();
      cmd->add_option("--count", count, "Number of instances")->capture_default_str()->check(CLI::PositiveNumber);
    }
  };

  // solve
  auto* solve = app.add_subcommand("solve", "Exact transport between consecutive measure pairs");
  common(solve, true);
  std::string pricing = "block";
  solve->add_option("--pricing", pricing, "block or dantzig")->capture_default_str()->check(CLI::IsMember({"block", "dantzig"}));

  // sinkhorn
  auto* sinkhorn = app.add_subcommand("sinkhorn", "Sinkhorn iterations with a chosen initialization");
  common(sinkhorn, true);
  SinkhornFlags sk_flags;
  add_sinkhorn_flags(sinkhorn, sk_flags);
  std::string sk_init = "ones";
  std::string model_path;
  bool identical = false;
  sinkhorn->add_option("--init", sk_init, "ones or net")->capture_default_str()->check(CLI::IsMember({"ones", "net"}));
  sinkhorn->add_option("--model", model_path, "Checkpoint for the net initialization");
  sinkhorn->add_flag("--identical", identical, "Transport every measure onto itself");

  // bench
  auto* bench = app.add_subcommand("bench", "Iterations-to-MCV benchmark of initializations");
  common(bench, false);
  SinkhornFlags bench_flags;
  bench_flags.max_iters = 10000;
  add_sinkhorn_flags(bench, bench_flags);
  std::vector<std::string> datasets{"random"};
  std::vector<std::string> inits{"ones"};
  std::vector<double> thresholds{1e-2, 1e-3};
  long instances = 200;
  bench->add_option("--dataset", datasets, "random and/or raw_grid / IDX files")->capture_default_str();
  bench->add_option("--init", inits, "ones and/or net")->capture_default_str()->check(CLI::IsMember({"ones", "net"}));
  bench->add_option("--model", model_path, "Checkpoint for the net initialization");
  bench->add_option("--thresholds", thresholds, "MCV thresholds summarized")->capture_default_str();
  bench->add_option("--count", instances, "Instances (measure pairs) per dataset")->capture_default_str()->check(CLI::PositiveNumber);

  // train
  auto* train = app.add_subcommand("train", "Adversarial training of the potential approximator");
  common(train, false);
  TrainConfig tc;
  std::string loss = "potential";
  int latent_side = 8;
  long max_outer = 0;
  train->add_option("--samples", tc.total_unique_samples, "Unique generated samples")->capture_default_str();
  train->add_option("--batch", tc.batch_size, "Batch size")->capture_default_str();
  train->add_option("--minibatch", tc.minibatch_size, "Minibatch size")->capture_default_str();
  train->add_option("--epochs", tc.inner_epochs, "Inner epochs per batch")->capture_default_str();
  train->add_option("--lr-approximator", tc.lr_approximator, "Initial approximator rate")->capture_default_str();
  train->add_option("--lr-generator", tc.lr_generator, "Initial generator rate")->capture_default_str();
  train->add_option("--lr-decay", tc.lr_decay, "Per-iteration rate decay")->capture_default_str();
  train->add_option("--lr-reference-dim", tc.lr_reference_dim, "Adam step = rate / this")->capture_default_str();
  train->add_option("--loss", loss, "potential or ws")->capture_default_str()->check(CLI::IsMember({"potential", "ws"}));
  train->add_option("--latent-side", latent_side, "Latent halves are side x side images")->capture_default_str();
  train->add_option("--outer-iterations", max_outer, "Stop after this many outer iterations (0: all)")->capture_default_str();
  train->add_option("--checkpoint-every", tc.checkpoint_every, "Checkpoint interval in outer iterations")->capture_default_str();

  // barycenter
  auto* bary = app.add_subcommand("barycenter", "Barycenter of a set of measures by potential descent");
  common(bary, true);
  BarycenterConfig bc;
  std::string source = "exact";
  std::string simplex = "project";
  std::string rule = "constant";
  bary->add_option("--eta", bc.step, "Step size")->capture_default_str();
  bary->add_option("--steps", bc.max_steps, "Maximum steps")->capture_default_str();
  bary->add_option("--source", source, "exact or net")->capture_default_str()->check(CLI::IsMember({"exact", "net"}));
  bary->add_option("--model", model_path, "Checkpoint for net potentials");
  bary->add_option("--simplex", simplex, "project or softmax")->capture_default_str()->check(CLI::IsMember({"project", "softmax"}));
  bary->add_option("--rule", rule, "constant or backtracking")->capture_default_str()->check(CLI::IsMember({"constant", "backtracking"}));
  bary->add_option("--tolerance", bc.tolerance, "Stop when one step improves less than this")->capture_default_str();

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Generate or convert a dataset to raw_grid");
  common(gen, true);
  std::string kind = "random_r3";
  bool pgm = false;
  gen->add_option("--kind", kind, "random_r3, idx or raw_grid (the latter two read --dataset)")
      ->capture_default_str()
      ->check(CLI::IsMember({"random_r3", "idx", "raw_grid"}));
  gen->add_flag("--pgm", pgm, "Also write PGM renders");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    ensure_dir(out_dir);
    const auto out_path = [&](const std::string& name) { return (fs::path(out_dir) / name).string(); };

    if (solve->parsed()) {
      Manifest manifest("solve", app);
      const std::uint64_t s = resolve_seed(seed);
      manifest.doc["seed"] = s;
      const auto measures = load_measures(dataset, 2 * count, n, s, manifest);
      if (measures.size() < 2) throw InvalidArgument("solve needs at least two measures");
      const CostMatrix cost = cost_for(measures.front());
      ExactOptions options;
      options.pricing = pricing == "dantzig" ? Pricing::dantzig : Pricing::block_search;
      const std::size_t pairs = measures.size() / 2;
      std::vector<std::optional<ExactSolution>> solutions(pairs);
      std::vector<char> certified(pairs, 0);
      parallel_for(pairs, [&](std::size_t k) {
        solutions[k] = solve_exact(measures[2 * k], measures[2 * k + 1], cost, options);
        certified[k] = verify_certificate(*solutions[k], measures[2 * k], measures[2 * k + 1], cost).passed();
      });
      auto summary = open_csv(out_path("solutions.csv"), manifest);
      summary << "instance_id,primal,dual,gap,pivots,certified\n";
      auto potentials = open_csv(out_path("potentials.csv"), manifest);
      potentials << "instance_id,i,f,g\n";
      for (std::size_t k = 0; k < pairs; ++k) {
        const auto& sol = *solutions[k];
        summary << k << ',' << sol.primal_value << ',' << sol.dual_value << ',' << sol.gap << ',' << sol.iterations << ','
                << (certified[k] ? 1 : 0) << '\n';
        for (Eigen::Index i = 0; i < sol.duals.f.size(); ++i)
          potentials << k << ',' << i << ',' << sol.duals.f[i] << ',' << sol.duals.g[i] << '\n';
      }
      manifest.write(out_dir);
      return std::all_of(certified.begin(), certified.end(), [](char b) { return b != 0; }) ? 0 : kRuntimeError;
    }

    if (sinkhorn->parsed()) {
      Manifest manifest("sinkhorn", app);
      const std::uint64_t s = resolve_seed(seed);
      manifest.doc["seed"] = s;
      const auto measures = load_measures(dataset, identical ? count : 2 * count, n, s, manifest);
      const CostMatrix cost = cost_for(measures.front());
      const SinkhornConfig config = sk_flags.config();
      std::optional<Approximator> approximator;
      if (sk_init == "net") approximator = load_approximator(model_path, manifest);
      const std::size_t pairs = identical ? measures.size() : measures.size() / 2;
      std::vector<std::string> rows(pairs);
      std::vector<char> fell_back(pairs, 0);
      parallel_for(pairs, [&](std::size_t k) {
        const DiscreteMeasure& mu = identical ? measures[k] : measures[2 * k];
        const DiscreteMeasure& nu = identical ? measures[k] : measures[2 * k + 1];
        std::int64_t setup_ns = 0;
        const Vector v0 = initial_scaling(approximator ? &*approximator : nullptr, mu, nu, cost, config, setup_ns);
        bool fb = false;
        SinkhornTrace trace = run_sinkhorn(mu, nu, cost, config, v0, fb);
        charge_setup(trace, setup_ns);
        fell_back[k] = fb;
        const double exact = solve_exact(mu, nu, cost).primal_value;
        std::ostringstream block;
        block << std::setprecision(17);
        if (exact > 0.0) {
          write_trace_rows(block, static_cast<long>(k), sk_init, trace, exact);
        } else {
          for (const auto& cp : trace.checkpoints)
            block << k << ',' << sk_init << ',' << cp.iteration << ',' << cp.mcv << ",nan," << cp.wall_time_ns << '\n';
        }
        rows[k] = block.str();
      });
      auto trace_csv = open_csv(out_path("trace.csv"), manifest);
      trace_csv << "instance_id,init,iteration,mcv,rel_err,wall_time_ns\n";
      for (const auto& r : rows) trace_csv << r;
      const long fallbacks = std::count(fell_back.begin(), fell_back.end(), 1);
      if (fallbacks > 0) std::cerr << "note: " << fallbacks << " runs overflowed in the linear domain and used the log domain\n";
      manifest.doc["log_domain_fallbacks"] = fallbacks;
      manifest.write(out_dir);
      return 0;
    }

    if (bench->parsed()) {
      Manifest manifest("bench", app);
      const std::uint64_t s = resolve_seed(seed);
      manifest.doc["seed"] = s;
      const SinkhornConfig config = bench_flags.config();
      std::optional<Approximator> approximator;
      if (std::find(inits.begin(), inits.end(), "net") != inits.end())
        approximator = load_approximator(model_path, manifest);
      std::vector<double> summary_thresholds;
      for (double t : thresholds) {
        if (!config.stop_mcv || t >= *config.stop_mcv) summary_thresholds.push_back(t);
      }
      auto trace_csv = open_csv(out_path("trace.csv"), manifest);
      trace_csv << "instance_id,init,iteration,mcv,rel_err,wall_time_ns\n";
      auto summary_csv = open_csv(out_path("summary.csv"), manifest);
      summary_csv << "dataset,init,threshold,mean_iters,ci95,samples\n";
      long fallbacks = 0;
      long censored = 0;
      for (const std::string& ds : datasets) {
        const auto measures = load_measures(ds, 2 * instances, n, s, manifest);
        const CostMatrix cost = cost_for(measures.front());
        const std::size_t pairs = measures.size() / 2;
        std::vector<double> exact(pairs);
        parallel_for(pairs, [&](std::size_t k) { exact[k] = solve_exact(measures[2 * k], measures[2 * k + 1], cost).primal_value; });
        const std::string label = is_generated(ds) ? "random" : fs::path(ds).filename().string();
        for (const std::string& init : inits) {
          std::vector<std::optional<SinkhornTrace>> traces(pairs);
          std::vector<char> fell_back(pairs, 0);
          parallel_for(pairs, [&](std::size_t k) {
            const DiscreteMeasure& mu = measures[2 * k];
            const DiscreteMeasure& nu = measures[2 * k + 1];
            std::int64_t setup_ns = 0;
            const Vector v0 =
                initial_scaling(init == "net" ? &*approximator : nullptr, mu, nu, cost, config, setup_ns);
            bool fb = false;
            traces[k] = run_sinkhorn(mu, nu, cost, config, v0, fb);
            charge_setup(*traces[k], setup_ns);
            fell_back[k] = fb;
          });
          fallbacks += std::count(fell_back.begin(), fell_back.end(), 1);
          for (std::size_t k = 0; k < pairs; ++k) write_trace_rows(trace_csv, static_cast<long>(k), init, *traces[k], exact[k]);
          for (double threshold : summary_thresholds) {
            // Runs that never reach the threshold count as max_iters.
            std::vector<double> iters(pairs);
            for (std::size_t k = 0; k < pairs; ++k) {
              const auto hit = iterations_to_mcv(*traces[k], threshold);
              if (!hit) ++censored;
              iters[k] = static_cast<double>(hit.value_or(config.max_iters));
            }
            const double mean = std::accumulate(iters.begin(), iters.end(), 0.0) / static_cast<double>(pairs);
            double ss = 0.0;
            for (double x : iters) ss += (x - mean) * (x - mean);
            const double sd = pairs > 1 ? std::sqrt(ss / static_cast<double>(pairs - 1)) : 0.0;
            summary_csv << label << ',' << init << ',' << threshold << ',' << mean << ','
                        << 1.96 * sd / std::sqrt(static_cast<double>(pairs)) << ',' << pairs << '\n';
          }
        }
      }
      if (censored > 0) std::cerr << "note: " << censored << " run/threshold combinations hit --max-iters\n";
      manifest.doc["log_domain_fallbacks"] = fallbacks;
      manifest.doc["censored"] = censored;
      manifest.write(out_dir);
      return 0;
    }

    if (train->parsed()) {
      Manifest manifest("train", app);
      const std::uint64_t s = resolve_seed(seed);
      manifest.doc["seed"] = s;
      tc.seed = s;
      tc.loss = loss == "ws" ? TrainLoss::ws : TrainLoss::potential;
      const int side = grid_side(n);
      const std::string model_out = out_path("model.ckpt");
      if (tc.checkpoint_every > 0) tc.checkpoint_path = model_out;
      const GeometryPtr grid = make_grid(side, side);
      const CostMatrix cost = build_cost(*grid, *grid);
      Generator generator(GeneratorConfig::for_grid(side, latent_side));
      Approximator approximator(ApproximatorConfig{n});
      Trainer trainer(generator, approximator, cost, tc, grid);
      trainer.init_models();
      while (!trainer.done() && (max_outer == 0 || trainer.iteration() < max_outer)) {
        const TrainRecord r = trainer.step();
        std::cerr << "iteration " << r.iteration << ": loss " << r.loss_before << " -> " << r.loss_after
                  << ", generator objective " << r.generator_objective << '\n';
      }
      CheckpointHeader progress;
      progress.seed = s;
      progress.outer_iterations = trainer.iteration();
      progress.samples_seen = trainer.samples_seen();
      save_checkpoint(make_checkpoint(generator, approximator, progress), model_out);
      manifest.output(model_out);
      trainer.log().write_csv(out_path("train_log.csv"), false);
      manifest.output(out_path("train_log.csv"));
      auto timing = open_csv(out_path("timing.csv"), manifest);
      timing << "iteration,target_time_ns\n";
      for (const auto& r : trainer.log().records) timing << r.iteration << ',' << r.target_time_ns << '\n';
      manifest.write(out_dir);
      return 0;
    }

    if (bary->parsed()) {
      Manifest manifest("barycenter", app);
      const std::uint64_t s = resolve_seed(seed);
      manifest.doc["seed"] = s;
      const auto measures = load_measures(dataset, count, n, s, manifest);
      const CostMatrix cost = cost_for(measures.front());
      std::optional<Approximator> approximator;
      if (source == "net") {
        approximator = load_approximator(model_path, manifest);
        bc.source = PotentialSource::approximator;
        bc.approximator = &*approximator;
      }
      bc.simplex = simplex == "softmax" ? SimplexHandling::softmax_reparam : SimplexHandling::euclidean_project;
      bc.rule = rule == "backtracking" ? StepRule::backtracking : StepRule::constant;
      const BarycenterResult result = barycenter_descent(measures, cost, bc);
      write_raw_grid(out_path("barycenter.raw"), std::vector<DiscreteMeasure>{result.mu});
      manifest.output(out_path("barycenter.raw"));
      write_pgm(out_path("barycenter.pgm"), result.mu);
      manifest.output(out_path("barycenter.pgm"));
      auto objective = open_csv(out_path("objective.csv"), manifest);
      objective << "step,objective\n";
      for (std::size_t k = 0; k < result.objective.size(); ++k) objective << k << ',' << result.objective[k] << '\n';
      manifest.write(out_dir);
      return 0;
    }

    if (gen->parsed()) {
      Manifest manifest("gen-data", app);
      std::vector<DiscreteMeasure> measures;
      if (kind == "random_r3") {
        const std::uint64_t s = resolve_seed(seed);
        manifest.doc["seed"] = s;
        measures = load_measures("random", count, n, s, manifest);
      } else {
        if (is_generated(dataset)) throw InvalidArgument("--kind " + kind + " needs --dataset <path>");
        measures = load_measures(dataset, count, n, 0, manifest);
      }
      write_raw_grid(out_path("data.raw"), measures);
      manifest.output(out_path("data.raw"));
      if (pgm) {
        for (std::size_t k = 0; k < measures.size(); ++k) {
          const std::string path = out_path("image_" + std::to_string(k) + ".pgm");
          write_pgm(path, measures[k]);
          manifest.output(path);
        }
      }
      manifest.write(out_dir);
      return 0;
    }
  } catch (const InvalidArgument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
