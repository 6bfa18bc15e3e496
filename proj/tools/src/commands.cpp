#include "gsnet_cli/commands.hpp"

#include <CLI11.hpp>
#include <functional>
#include <ostream>
#include <sstream>

#include "gsnet/checkpoint.hpp"
#include "gsnet/diagnostics.hpp"
#include "gsnet/error.hpp"
#include "gsnet_cli/training.hpp"

namespace gsnet::cli {

namespace {

struct Resolved {
  RunConfig cfg;
  std::filesystem::path out_dir;
};

Resolved resolve(const CommandOptions& opts) {
  Resolved r{load_config(opts.config), {}};
  if (opts.seed) r.cfg.seed = *opts.seed;
  r.out_dir = opts.out ? *opts.out : std::filesystem::path(r.cfg.out_dir);
  r.cfg.validate();
  return r;
}

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const NonFiniteLossError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNonFinite;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::filesystem::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

void print_counts(std::ostream& out, const char* split, const Dataset& d, std::size_t levels) {
  const auto counts = d.level_counts(levels);
  out << split << ":";
  for (std::size_t l = 0; l < levels; ++l) out << " level" << l << "=" << counts[l];
  out << " total=" << d.size() << "\n";
}

GsnetModel load_model(const RunConfig& cfg, const std::filesystem::path& ckpt) {
  GsnetModel model = build_model(cfg.model, cfg.seed);
  ParamList params = model.parameters();
  restore_parameters(params, load_checkpoint(ckpt));
  return model;
}

std::filesystem::path checkpoint_or_default(const CommandOptions& opts, const std::filesystem::path& out_dir) {
  return opts.checkpoint ? *opts.checkpoint : out_dir / "final.ckpt";
}

}  // namespace

const std::vector<AblationVariant>& ablation_variants() {
  static const std::vector<AblationVariant> v{
      {"GSNet-0", true, false, true},
      {"GSNet-1", false, true, true},
      {"GSNet-2", true, true, false},
      {"GSNet-3", true, true, true},
  };
  return v;
}

int cmd_generate(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto r = resolve(opts);
    const std::filesystem::path dir = opts.out ? *opts.out : std::filesystem::path(r.cfg.data_dir);
    const auto data = build_dataset(r.cfg.data, r.cfg.build);
    const auto manifest = write_dataset(data, dir);
    out << "manifest: " << manifest.string() << "\n";
    print_counts(out, "train", data.train, r.cfg.data.num_levels);
    print_counts(out, "val", data.val, r.cfg.data.num_levels);
    out << "duplicates_removed: " << data.duplicates_removed << "\n";
    return kExitOk;
  });
}

int cmd_train(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto r = resolve(opts);
    const auto data = load_dataset(r.cfg.data_dir);
    std::filesystem::create_directories(r.out_dir);
    write_file_atomic(r.out_dir / "config.txt", serialize_config(r.cfg));
    const auto result = train_model(r.cfg, data, r.out_dir);
    out << kLogHeader << "\n";
    for (const auto& e : result.log) out << format_log_line(e) << "\n";
    out << "checkpoint: " << (r.out_dir / "final.ckpt").string() << "\n";
    return kExitOk;
  });
}

int cmd_eval(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto r = resolve(opts);
    const auto data = load_dataset(r.cfg.data_dir);
    const auto model = load_model(r.cfg, checkpoint_or_default(opts, r.out_dir));
    const Dataset& split = r.cfg.eval_split == "train" ? data.train : data.val;
    if (split.size() == 0) throw InputError("eval: the " + r.cfg.eval_split + " split is empty");
    const std::string json = report_to_json(evaluate_model(model, split, r.cfg));
    std::filesystem::create_directories(r.out_dir);
    write_file_atomic(r.out_dir / "eval.json", json);
    out << json;
    return kExitOk;
  });
}

int cmd_ablate(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto r = resolve(opts);
    const auto data = load_dataset(r.cfg.data_dir);
    std::string table = "variant,guided,triple,iawca,seed,best_val_acc," + report_csv_header() + "\n";
    for (const auto& v : ablation_variants()) {
      RunConfig cfg = r.cfg;
      cfg.model.use_guided = v.guided;
      cfg.model.use_triple = v.triple;
      cfg.model.use_iawca = v.iawca;
      const auto result = train_model(cfg, data, r.out_dir / v.name);
      const auto report = evaluate_model(result.model, data.val, cfg);
      const std::string row = v.name + "," + (v.guided ? "1" : "0") + "," + (v.triple ? "1" : "0") + "," +
                              (v.iawca ? "1" : "0") + "," + std::to_string(cfg.seed) + "," +
                              std::to_string(result.best_val_acc) + "," + report_to_csv_row(report);
      table += row + "\n";
      out << row << "\n";
    }
    write_file_atomic(r.out_dir / "ablation.csv", table);
    return kExitOk;
  });
}

int cmd_diagnose(const CommandOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    auto r = resolve(opts);
    const auto data = load_dataset(r.cfg.data_dir);
    const auto model = load_model(r.cfg, checkpoint_or_default(opts, r.out_dir));
    const Dataset& pool = data.val.size() ? data.val : data.train;
    if (pool.size() == 0) throw InputError("diagnose: dataset is empty");
    std::filesystem::create_directories(r.out_dir);

    const std::size_t first = 0;
    const Tensor x = make_batch(pool, std::span<const std::size_t>(&first, 1));
    const std::size_t label = level_to_class(pool.items[0].label, r.cfg.train.half_level_head);
    const auto grad = grad_check_model(model, x, std::span<const std::size_t>(&label, 1), kDefaultFdStep, 4, r.cfg.seed);
    write_file_atomic(r.out_dir / "grad_check.json", grad_report_to_json(grad));

    std::string independence = "[\n";
    const std::size_t samples = std::min<std::size_t>(10, pool.size());
    for (std::size_t i = 0; i < samples; ++i) {
      const Tensor xi = make_batch(pool, std::span<const std::size_t>(&i, 1));
      independence += independence_to_json(compare_independence(model, xi));
      if (i + 1 < samples) independence += ",";
    }
    independence += "]\n";
    write_file_atomic(r.out_dir / "independence.json", independence);

    ForwardTrace trace;
    {
      NoGradGuard guard;
      forward(model, x, &trace);
    }
    export_attention_map(channel_energy(trace.feat_e), r.out_dir / "attention_encoder.pgm");
    export_attention_map(channel_energy(trace.feat_s, 0, true), r.out_dir / "attention_swin.pgm");
    export_attention_map(channel_energy(trace.guided), r.out_dir / "attention_guided.pgm");

    out << "grad_check max_rel_error: " << grad.max_rel_error() << (grad.passed(1e-4) ? " (pass)" : " (FAIL)") << "\n";
    out << "wrote grad_check.json, independence.json, attention_encoder.pgm, attention_swin.pgm, attention_guided.pgm to "
        << r.out_dir.string() << "\n";
    return kExitOk;
  });
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"GSNet grain-size classifier"};
  app.require_subcommand(1);
  CommandOptions opts;
  std::string config, checkpoint, outdir;
  std::uint64_t seed = 0;
  using Handler = int (*)(const CommandOptions&, std::ostream&, std::ostream&);
  const std::vector<std::tuple<const char*, const char*, Handler>> commands{
      {"generate", "Build the synthetic dataset and manifest", cmd_generate},
      {"train", "Train a model and write checkpoints plus a CSV log", cmd_train},
      {"eval", "Evaluate a checkpoint and print the metric report", cmd_eval},
      {"ablate", "Train the four ablation variants and compare them", cmd_ablate},
      {"diagnose", "Gradient check, independence probe and attention maps", cmd_diagnose},
  };
  std::vector<std::pair<CLI::App*, Handler>> subs;
  std::vector<CLI::Option*> seed_opts, ckpt_opts, out_opts;
  for (const auto& [name, help, fn] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config, "Config file (key = value lines)")->required();
    ckpt_opts.push_back(sub->add_option("--checkpoint", checkpoint, "Checkpoint path"));
    seed_opts.push_back(sub->add_option("--seed", seed, "Override the run seed"));
    out_opts.push_back(sub->add_option("--out", outdir, "Output directory"));
    subs.emplace_back(sub, fn);
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, e2;
    const int code = app.exit(e, o, e2);
    out << o.str();
    err << e2.str();
    return code == 0 ? kExitOk : kExitConfig;
  }
  opts.config = config;
  for (std::size_t i = 0; i < subs.size(); ++i) {
    if (!subs[i].first->parsed()) continue;
    if (ckpt_opts[i]->count()) opts.checkpoint = checkpoint;
    if (seed_opts[i]->count()) opts.seed = seed;
    if (out_opts[i]->count()) opts.out = outdir;
    return subs[i].second(opts, out, err);
  }
  return kExitFailure;
}

}  // namespace gsnet::cli
