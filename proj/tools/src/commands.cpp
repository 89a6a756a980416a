#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "csv.hpp"
#include "json.hpp"
#include "wdl/errors.hpp"
#include "wdl/eval.hpp"
#include "wdl/model_io.hpp"
#include "wdl/scgmm.hpp"
#include "wdl/sim.hpp"

namespace wdl::cli {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw InvalidInputError(message);
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

// Pulls --config out of the arguments and appends every key=value entry of
// that file whose flag was not given explicitly.
std::vector<std::string> apply_config_file(std::vector<std::string> args) {
  std::optional<std::string> path;
  for (std::size_t i = 1; i < args.size(); ++i) {
    if (args[i] == "--config") {
      require(i + 1 < args.size(), "--config needs a file argument");
      path = args[i + 1];
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
      break;
    }
    if (args[i].rfind("--config=", 0) == 0) {
      path = args[i].substr(9);
      args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
      break;
    }
  }
  if (!path) return args;

  std::ifstream in(*path);
  require(static_cast<bool>(in), "--config: cannot open " + *path);
  auto given = [&](const std::string& flag) {
    return std::any_of(args.begin(), args.end(),
                       [&](const std::string& a) { return a == flag || a.rfind(flag + "=", 0) == 0; });
  };
  std::vector<std::string> extra;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line.substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    require(eq != std::string::npos && eq > 0, *path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(body.substr(0, eq));
    const std::string value = trim(body.substr(eq + 1));
    const std::string flag = "--" + key;
    if (given(flag)) continue;
    if (value == "true") {
      extra.push_back(flag);
    } else if (value != "false") {
      extra.push_back(flag);
      extra.push_back(value);
    }
  }
  args.insert(args.end(), extra.begin(), extra.end());
  return args;
}

Scenario parse_scenario(const std::string& s) {
  if (s == "eq7" || s == "mixture") return Scenario::kMixture;
  if (s == "linear") return Scenario::kLinear;
  throw InvalidInputError("--scenario must be eq7 or linear, got '" + s + "'");
}

struct Options {
  bool quiet = false;

  // simulate
  std::string scenario = "eq7";
  std::size_t n_samples = 200;
  std::size_t points = 300;
  double omega = 0.1;
  std::uint64_t seed = 0;
  std::size_t grid_size = 99;
  std::string out_x;
  std::string out_q;
  std::string out_points;

  // fit
  std::string x_path;
  std::string q_path;
  std::string points_path;
  std::string model_path;
  std::string trace_path;
  std::size_t k = 2;
  double eta = 0.1;
  std::size_t max_iters = 100;
  std::size_t patience = 5;
  double validation_fraction = 0.2;
  std::size_t max_depth = 3;
  std::size_t min_leaf = 10;
  double min_split_improvement = 0.0;
  std::string pi_update = "em";
  bool zero_init = false;

  // predict
  std::string out_params;

  // evaluate
  std::string observed_path;
  std::string predicted_path;
  std::string out_path;
  std::string out_csv;

  // pdp
  std::size_t feature = 1;
  double rho = 0.5;
  std::size_t grid_points = 21;
  std::vector<double> values;
  std::string mode = "quantile";
};

std::ostream& progress(const Options& o, std::ostream& out) {
  static std::ostringstream sink;
  sink.str("");
  return o.quiet ? sink : out;
}

int cmd_simulate(const Options& o, std::ostream& out) {
  SimConfig cfg;
  cfg.scenario = parse_scenario(o.scenario);
  require(o.n_samples >= 2, "--n-samples must be at least 2");
  require(o.points >= 2, "--points must be at least 2");
  require(o.omega >= 0.0 && std::isfinite(o.omega), "--omega must be non-negative");
  require(o.grid_size >= 1, "--grid-size must be at least 1");
  cfg.samples = o.n_samples;
  cfg.points = o.points;
  cfg.omega = o.omega;
  cfg.seed = o.seed;
  cfg.grid = LevelGrid::uniform(o.grid_size);

  const DistributionalDataset data = simulate(cfg);
  std::vector<QuantileFunction> qs;
  qs.reserve(data.size());
  for (const auto& g : data.outcomes()) qs.push_back(empirical_quantiles(g, cfg.grid));
  write_covariates(o.out_x, data.covariates());
  write_quantiles(o.out_q, cfg.grid, qs);
  if (!o.out_points.empty()) {
    CsvWriter w(o.out_points);
    w.header({"sample_id", "value"});
    for (std::size_t i = 0; i < data.size(); ++i) {
      for (double v : data.outcomes()[i].points()) w.row({static_cast<double>(i), v});
    }
    w.close();
  }
  progress(o, out) << "simulate: wrote " << data.size() << " rows to " << o.out_x << " and " << o.out_q << "\n";
  return kExitOk;
}

ScgmmConfig fit_config(const Options& o, LevelGrid grid) {
  require(o.k >= 1, "--k must be at least 1");
  require(o.eta > 0.0 && std::isfinite(o.eta), "--eta must be positive");
  require(o.max_iters >= 1, "--max-iters must be at least 1");
  require(o.patience >= 1, "--patience must be at least 1");
  require(o.validation_fraction > 0.0 && o.validation_fraction < 1.0, "--validation-fraction must lie in (0, 1)");
  require(o.max_depth >= 1, "--max-depth must be at least 1");
  require(o.min_leaf >= 1, "--min-leaf must be at least 1");
  require(o.min_split_improvement >= 0.0, "--min-split-improvement must be non-negative");
  require(o.pi_update == "em" || o.pi_update == "gradient", "--pi-update must be em or gradient");
  ScgmmConfig cfg;
  cfg.components = o.k;
  cfg.learning_rate = o.eta;
  cfg.max_boost_iters = o.max_iters;
  cfg.early_stop_patience = o.patience;
  cfg.validation_fraction = o.validation_fraction;
  cfg.tree.max_depth = o.max_depth;
  cfg.tree.min_samples_leaf = o.min_leaf;
  cfg.tree.min_split_improvement = o.min_split_improvement;
  cfg.grid = std::move(grid);
  cfg.seed = o.seed;
  cfg.pi_update = o.pi_update == "em" ? WeightUpdate::kEmApprox : WeightUpdate::kProjectedGradient;
  cfg.zero_init = o.zero_init;
  cfg.validate();
  return cfg;
}

int cmd_fit(const Options& o, std::ostream& out) {
  require(o.q_path.empty() != o.points_path.empty(), "fit needs exactly one of --q or --points");
  Matrix x = read_covariates(o.x_path);
  std::vector<EmpiricalDistribution> outcomes;
  std::vector<QuantileFunction> observed;
  std::optional<LevelGrid> grid;
  std::string outcome_path;
  if (!o.q_path.empty()) {
    QuantileTable table = read_quantiles(o.q_path);
    grid = table.grid;
    for (const auto& q : table.rows) outcomes.push_back(EmpiricalDistribution::from_quantiles(q));
    observed = std::move(table.rows);
    outcome_path = o.q_path;
  } else {
    require(o.grid_size >= 1, "--grid-size must be at least 1");
    grid = LevelGrid::uniform(o.grid_size);
    outcomes = read_points(o.points_path);
    for (const auto& g : outcomes) observed.push_back(empirical_quantiles(g, *grid));
    outcome_path = o.points_path;
  }
  require(x.rows() == outcomes.size(), o.x_path + " has " + std::to_string(x.rows()) + " rows but " + outcome_path +
                                           " has " + std::to_string(outcomes.size()));
  const ScgmmConfig cfg = fit_config(o, *grid);
  const DistributionalDataset data(x, std::move(outcomes));

  std::ostream& log = progress(o, out);
  const ScgmmModel model = train(data, cfg, [&](const TrainingRecord& r) {
    log << "fit: iteration " << r.iteration << " train " << format_number(r.train_loss) << " validation "
        << format_number(r.validation_loss) << "\n";
  });
  save_model(model, o.model_path);

  double total = 0.0;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    total += w2_squared(observed[i], predict_quantiles(model, x.row(i), *grid));
  }
  const double final_loss = total / static_cast<double>(x.rows());
  if (!o.trace_path.empty()) {
    CsvWriter w(o.trace_path);
    w.header({"iteration", "train_loss", "validation_loss"});
    for (const auto& r : model.trace().records) {
      w.row({static_cast<double>(r.iteration), r.train_loss, r.validation_loss});
    }
    w.raw_line("final," + format_number(final_loss) + ",");
    w.close();
  }
  log << "fit: best iteration " << model.trace().best_iteration << ", loss on all rows " << format_number(final_loss)
      << "\n";
  return kExitOk;
}

Matrix read_model_covariates(const std::string& path, const ScgmmModel& model) {
  // A zero-byte file is an empty batch rather than a malformed one.
  std::error_code ec;
  if (std::filesystem::is_regular_file(path, ec) && std::filesystem::file_size(path, ec) == 0 && !ec) {
    return Matrix(0, model.input_dim());
  }
  Matrix x = read_covariates(path);
  require(x.cols() == model.input_dim(), path + " has " + std::to_string(x.cols()) + " columns, model expects " +
                                             std::to_string(model.input_dim()));
  return x;
}

int cmd_predict(const Options& o, std::ostream& out) {
  const ScgmmModel model = load_model(o.model_path);
  const Matrix x = read_model_covariates(o.x_path, model);
  const LevelGrid& grid = model.config().grid;
  CsvWriter qw(o.out_q);
  qw.header(quantile_header(grid));
  std::optional<CsvWriter> pw;
  if (!o.out_params.empty()) {
    pw.emplace(o.out_params);
    std::vector<std::string> names;
    for (const char* p : {"pi", "mu", "sd"}) {
      for (std::size_t k = 1; k <= model.components(); ++k) names.push_back(std::string(p) + "_" + std::to_string(k));
    }
    pw->header(names);
  }
  for (std::size_t i = 0; i < x.rows(); ++i) {
    const GaussianMixtureParams theta = predict_params(model, x.row(i));
    const QuantileFunction q = gmm_quantile_function(theta, grid);
    qw.row({q.values().begin(), q.values().end()});
    if (pw) {
      std::vector<double> row;
      for (const auto& c : theta.components()) row.push_back(c.weight);
      for (const auto& c : theta.components()) row.push_back(c.mean);
      for (const auto& c : theta.components()) row.push_back(c.sd);
      pw->row(row);
    }
  }
  qw.close();
  if (pw) pw->close();
  progress(o, out) << "predict: wrote " << x.rows() << " rows to " << o.out_q << "\n";
  return kExitOk;
}

int cmd_evaluate(const Options& o, std::ostream& out) {
  const QuantileTable observed = read_quantiles(o.observed_path);
  const QuantileTable predicted = read_quantiles(o.predicted_path);
  require(observed.grid == predicted.grid,
          "grid mismatch: " + o.observed_path + " and " + o.predicted_path + " use different quantile levels");
  require(observed.rows.size() == predicted.rows.size(),
          o.observed_path + " has " + std::to_string(observed.rows.size()) + " rows but " + o.predicted_path +
              " has " + std::to_string(predicted.rows.size()));

  EvalReport report;
  bool defined = true;
  try {
    report = prediction_loss(observed.rows, predicted.rows);
  } catch (const UndefinedRSquaredError& e) {
    report = e.report();
    defined = false;
  }
  nlohmann::json doc{{"rows", report.per_sample.size()},
                     {"mean_loss", report.mean_loss},
                     {"variance", report.variance},
                     {"r_squared", defined ? nlohmann::json(report.r_squared) : nlohmann::json(nullptr)},
                     {"per_sample", report.per_sample}};
  std::ofstream f(o.out_path, std::ios::binary | std::ios::trunc);
  require(static_cast<bool>(f), "cannot write " + o.out_path);
  f << doc.dump(1) << "\n";
  f.close();
  if (!o.out_csv.empty()) {
    CsvWriter w(o.out_csv);
    w.header({"row", "w2"});
    for (std::size_t i = 0; i < report.per_sample.size(); ++i) w.row({static_cast<double>(i), report.per_sample[i]});
    w.close();
  }
  std::ostream& log = progress(o, out);
  log << "evaluate: mean loss " << format_number(report.mean_loss);
  if (!defined) {
    log << "\n";
    throw InvalidInputError("R^2 is undefined because every observed quantile function is identical");
  }
  log << ", R^2 " << format_number(report.r_squared) << "\n";
  return kExitOk;
}

int cmd_pdp(const Options& o, std::ostream& out) {
  require(o.rho > 0.0 && o.rho < 1.0, "--rho must lie in (0, 1)");
  require(o.mode == "quantile" || o.mode == "params" || o.mode == "ice", "--mode must be quantile, params or ice");
  const ScgmmModel model = load_model(o.model_path);
  const Matrix x = read_model_covariates(o.x_path, model);
  require(o.feature >= 1 && o.feature <= x.cols(),
          "--feature must lie in 1.." + std::to_string(x.cols()) + " (column x<feature>)");
  require(x.rows() > 0, o.x_path + " has no rows");
  const std::size_t feature = o.feature - 1;
  require(o.grid_points >= 1, "--grid-points must be at least 1");
  std::vector<double> values = o.values.empty() ? feature_range(x, feature, o.grid_points) : o.values;
  for (std::size_t j = 1; j < values.size(); ++j) require(values[j] > values[j - 1], "--values must be increasing");

  CsvWriter w(o.out_path);
  if (o.mode == "quantile") {
    const PdpCurve curve = functional_pdp(model, x, feature, values, o.rho);
    w.header({"feature_value", "value"});
    for (std::size_t j = 0; j < values.size(); ++j) w.row({values[j], curve.values[j]});
  } else if (o.mode == "ice") {
    const IceCurves ice = ice_curves(model, x, feature, values, o.rho);
    w.header({"row", "feature_value", "value"});
    for (std::size_t r = 0; r < x.rows(); ++r) {
      for (std::size_t j = 0; j < values.size(); ++j) w.row({static_cast<double>(r), values[j], ice.values(r, j)});
    }
  } else {
    const ParamCurves curves = marginal_param_curve(model, x, feature, values);
    std::vector<std::string> names{"feature_value"};
    for (const char* p : {"pi", "mu", "sd"}) {
      for (std::size_t k = 1; k <= model.components(); ++k) names.push_back(std::string(p) + "_" + std::to_string(k));
    }
    w.header(names);
    for (std::size_t j = 0; j < values.size(); ++j) {
      std::vector<double> row{values[j]};
      for (const Matrix* m : {&curves.weight, &curves.mean, &curves.sd}) {
        for (std::size_t k = 0; k < model.components(); ++k) row.push_back((*m)(j, k));
      }
      w.row(row);
    }
  }
  w.close();
  progress(o, out) << "pdp: wrote " << values.size() << " grid values to " << o.out_path << "\n";
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& raw_args, std::ostream& out, std::ostream& err) {
  Options o;
  CLI::App app{"Wasserstein distributional learning with conditional Gaussian mixtures", "wdl"};
  app.require_subcommand(1);
  app.fallthrough();
  app.add_flag("--quiet", o.quiet, "Suppress progress output");
  app.add_option("--config", "key=value file; explicit flags take precedence");

  auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
  sim->add_option("--scenario", o.scenario, "eq7 (two-component mixture) or linear")->capture_default_str();
  sim->add_option("--n-samples", o.n_samples, "Number of samples")->capture_default_str();
  sim->add_option("--points", o.points, "Draws per sample (eq7)")->capture_default_str();
  sim->add_option("--omega", o.omega, "Noise sd on the component means (eq7)")->capture_default_str();
  sim->add_option("--seed", o.seed, "Random seed")->capture_default_str();
  sim->add_option("--grid-size", o.grid_size, "Number of quantile levels written")->capture_default_str();
  sim->add_option("--out-x", o.out_x, "Covariates CSV")->required();
  sim->add_option("--out-q", o.out_q, "Quantiles CSV")->required();
  sim->add_option("--out-points", o.out_points, "Optional long CSV of raw draws");

  auto* fit = app.add_subcommand("fit", "Train a model");
  fit->add_option("--x", o.x_path, "Covariates CSV")->required();
  fit->add_option("--q", o.q_path, "Quantiles CSV");
  fit->add_option("--points", o.points_path, "Long CSV of raw draws");
  fit->add_option("--grid-size", o.grid_size, "Quantile levels used with --points")->capture_default_str();
  fit->add_option("--model", o.model_path, "Output model JSON")->required();
  fit->add_option("--trace", o.trace_path, "Output per-iteration trace CSV");
  fit->add_option("--k", o.k, "Mixture components")->capture_default_str();
  fit->add_option("--eta", o.eta, "Learning rate")->capture_default_str();
  fit->add_option("--max-iters", o.max_iters, "Maximum boosting iterations")->capture_default_str();
  fit->add_option("--patience", o.patience, "Early-stopping patience")->capture_default_str();
  fit->add_option("--validation-fraction", o.validation_fraction, "Held-out share")->capture_default_str();
  fit->add_option("--max-depth", o.max_depth, "Tree depth")->capture_default_str();
  fit->add_option("--min-leaf", o.min_leaf, "Minimum rows per leaf")->capture_default_str();
  fit->add_option("--min-split-improvement", o.min_split_improvement, "Minimum split gain")->capture_default_str();
  fit->add_option("--seed", o.seed, "Split seed")->capture_default_str();
  fit->add_option("--pi-update", o.pi_update, "Weight update: em or gradient")->capture_default_str();
  fit->add_flag("--zero-init", o.zero_init, "Start all ensembles at zero");

  auto* predict = app.add_subcommand("predict", "Predict quantiles and parameters");
  predict->add_option("--model", o.model_path, "Model JSON")->required();
  predict->add_option("--x", o.x_path, "Covariates CSV")->required();
  predict->add_option("--out-q", o.out_q, "Output quantiles CSV")->required();
  predict->add_option("--out-params", o.out_params, "Output mixture parameters CSV");

  auto* evaluate = app.add_subcommand("evaluate", "Score predicted against observed quantiles");
  evaluate->add_option("--observed", o.observed_path, "Observed quantiles CSV")->required();
  evaluate->add_option("--predicted", o.predicted_path, "Predicted quantiles CSV")->required();
  evaluate->add_option("--out", o.out_path, "Output report JSON")->required();
  evaluate->add_option("--out-csv", o.out_csv, "Optional per-row CSV");

  auto* pdp = app.add_subcommand("pdp", "Partial dependence curves");
  pdp->add_option("--model", o.model_path, "Model JSON")->required();
  pdp->add_option("--x", o.x_path, "Covariates CSV")->required();
  pdp->add_option("--feature", o.feature, "1-based covariate column")->capture_default_str();
  pdp->add_option("--rho", o.rho, "Quantile level")->capture_default_str();
  pdp->add_option("--grid-points", o.grid_points, "Evenly spaced feature values")->capture_default_str();
  pdp->add_option("--values", o.values, "Explicit feature values")->delimiter(',');
  pdp->add_option("--mode", o.mode, "quantile, params or ice")->capture_default_str();
  pdp->add_option("--out", o.out_path, "Output CSV")->required();

  try {
    const std::vector<std::string> args = apply_config_file(raw_args);
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const InvalidInputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  }

  try {
    if (sim->parsed()) return cmd_simulate(o, out);
    if (fit->parsed()) return cmd_fit(o, out);
    if (predict->parsed()) return cmd_predict(o, out);
    if (evaluate->parsed()) return cmd_evaluate(o, out);
    return cmd_pdp(o, out);
  } catch (const InvalidInputError& e) {
    err << "error: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const DecodeError& e) {
    err << "error: " << o.model_path << ": " << e.what() << "\n";
    return kExitInvalid;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitNumerical;
  }
}

}  // namespace wdl::cli
