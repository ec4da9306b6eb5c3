#include <iostream>

#include <CLI11.hpp>

#include "gammkit/cli.hpp"

using namespace gammkit::cli;

int main(int argc, char** argv) {
  CLI::App app{"gammkit: penalized regression splines and mixed models for experimental time series"};
  app.require_subcommand(1);

  RunConfig cfg;
  std::string format = "text";
  std::optional<double> rho;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> newdata;

  auto add_common = [&](CLI::App* sub, bool needs_data) {
    auto* d = sub->add_option("--data", cfg.data, "input CSV file");
    if (needs_data) d->required()->check(CLI::ExistingFile);
    sub->add_option("--spec", cfg.specs, "model spec file (scenario file for simulate)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", cfg.output_dir, "output directory")->capture_default_str();
    sub->add_option("--format", format, "summary format")->check(CLI::IsMember({"text", "delimited"}))->capture_default_str();
    sub->add_option("--seed", seed, "random seed");
  };

  auto* fit = app.add_subcommand("fit", "fit a model and write summary, coefficients, residuals and effect grids");
  add_common(fit, true);
  fit->add_option("--rho", rho, "AR(1) parameter overriding the spec");

  auto* predict = app.add_subcommand("predict", "fit a model and predict at new covariate values");
  add_common(predict, true);
  predict->add_option("--rho", rho, "AR(1) parameter overriding the spec");
  predict->add_option("--newdata", newdata, "CSV with covariates to predict at (default: the training data)")->check(CLI::ExistingFile);

  auto* compare = app.add_subcommand("compare", "compare two models by REML score (pass --spec twice)");
  add_common(compare, true);
  compare->add_option("--rho", rho, "AR(1) parameter overriding both specs");

  auto* acf = app.add_subcommand("acf", "per-series autocorrelation of raw and whitened residuals");
  add_common(acf, true);
  acf->add_option("--rho", rho, "AR(1) parameter overriding the spec");
  acf->add_option("--max-lag", cfg.max_lag, "largest lag")->capture_default_str()->check(CLI::NonNegativeNumber);

  auto* suggest = app.add_subcommand("suggest-rho", "estimate the AR(1) parameter from a pilot model");
  add_common(suggest, true);

  auto* simulate = app.add_subcommand("simulate", "generate an experiment from a scenario file");
  add_common(simulate, false);

  auto* permtest = app.add_subcommand("permtest", "type-I check of the factor smooth under within-series permutation");
  add_common(permtest, true);
  permtest->add_option("--n-perm", cfg.n_perm, "number of permutations")->capture_default_str()->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  cfg.command = *parse_command(app.get_subcommands().front()->get_name());
  cfg.format = format == "text" ? Format::Text : Format::Delimited;
  cfg.rho = rho;
  cfg.seed = seed;
  cfg.newdata = newdata;
  return run(cfg, std::cerr);
}
