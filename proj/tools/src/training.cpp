#include "gsnet_cli/training.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>

#include "gsnet/checkpoint.hpp"
#include "gsnet/error.hpp"
#include "gsnet/ops.hpp"
#include "gsnet/optim.hpp"
#include "gsnet/random.hpp"

namespace gsnet::cli {

namespace {

std::string fixed(double v, int digits) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

void write_log(const std::filesystem::path& path, const std::vector<EpochLog>& log) {
  std::string text = std::string(kLogHeader) + "\n";
  for (const auto& e : log) text += format_log_line(e) + "\n";
  write_file_atomic(path, text);
}

void dump_non_finite(const std::filesystem::path& out_dir, const GsnetModel& model, std::size_t epoch,
                     std::size_t step, double lr, double loss) {
  std::string text = "epoch=" + std::to_string(epoch) + " step=" + std::to_string(step) + " lr=" + fixed(lr, 10) +
                     " loss=" + std::to_string(loss) + "\n";
  for (const auto& [name, t] : model.parameters()) {
    double sq = 0.0;
    bool finite = true;
    for (double v : t.data()) {
      sq += v * v;
      finite = finite && std::isfinite(v);
    }
    text += name + " norm=" + std::to_string(std::sqrt(sq)) + (finite ? "" : " NON-FINITE") + "\n";
  }
  write_file_atomic(out_dir / "nan_dump.txt", text);
}

}  // namespace

std::string format_log_line(const EpochLog& e) {
  return std::to_string(e.epoch) + "," + std::to_string(e.step) + "," + fixed(e.lr, 8) + "," + fixed(e.train_loss, 6) +
         "," + fixed(e.val_acc, 6);
}

std::size_t level_to_class(std::size_t level, bool half_level_head) { return half_level_head ? 2 * level : level; }

double class_to_level(std::size_t cls, bool half_level_head) {
  return half_level_head ? static_cast<double>(cls) / 2.0 : static_cast<double>(cls);
}

std::vector<double> predict_levels(const GsnetModel& model, const Dataset& data, bool half_level_head,
                                   std::size_t batch_size) {
  NoGradGuard guard;
  std::vector<double> out;
  out.reserve(data.size());
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Tensor logits = forward(model, make_batch(data, idx));
    const std::size_t classes = logits.dim(1);
    const auto d = logits.data();
    for (std::size_t b = 0; b < idx.size(); ++b) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < classes; ++c) {
        if (d[b * classes + c] > d[b * classes + best]) best = c;
      }
      out.push_back(class_to_level(best, half_level_head));
    }
  }
  return out;
}

EvalReport evaluate_model(const GsnetModel& model, const Dataset& data, const RunConfig& cfg) {
  EvalSet es;
  es.num_levels = cfg.data.num_levels;
  for (const auto& it : data.items) es.y.push_back(static_cast<double>(it.label));
  es.y_hat = predict_levels(model, data, cfg.train.half_level_head);
  return evaluate_all(es, cfg.recall);
}

double validation_accuracy(const GsnetModel& model, const Dataset& data, const RunConfig& cfg) {
  if (data.size() == 0) return 0.0;
  EvalSet es;
  es.num_levels = cfg.data.num_levels;
  for (const auto& it : data.items) es.y.push_back(static_cast<double>(it.label));
  es.y_hat = predict_levels(model, data, cfg.train.half_level_head);
  return biased_accuracy(es);
}

TrainResult train_model(const RunConfig& cfg, const DatasetSplit& data, const std::filesystem::path& out_dir) {
  cfg.validate();
  if (data.train.size() == 0) throw InputError("train: empty training split");
  const bool write = !out_dir.empty();
  if (write) {
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  }

  TrainResult result;
  result.model = build_model(cfg.model, cfg.seed);
  auto& model = result.model;
  ParamList params = model.parameters();
  for (auto& [name, p] : params) p.set_requires_grad(true);

  if (cfg.train.epochs == 0) {
    if (write) {
      save_checkpoint(out_dir / "final.ckpt", params);
      write_log(out_dir / "train_log.csv", result.log);
    }
    return result;
  }

  SgdState opt;
  opt.learning_rate = cfg.train.lr;
  opt.momentum = cfg.train.momentum;
  opt.weight_decay = cfg.train.weight_decay;

  const std::size_t n = data.train.size();
  const std::size_t batch = cfg.train.batch_size;
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  const std::size_t total_steps = steps_per_epoch * cfg.train.epochs;
  std::vector<std::size_t> order(n);
  result.best_val_acc = -1.0;

  for (std::size_t epoch = 1; epoch <= cfg.train.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(mix_seed(cfg.seed, epoch));
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::span<const std::size_t> idx(order.data() + s * batch, std::min(batch, n - s * batch));
      std::vector<std::size_t> labels;
      for (auto i : idx) labels.push_back(level_to_class(data.train.items[i].label, cfg.train.half_level_head));
      opt.learning_rate = poly_lr(cfg.train.lr, result.steps, total_steps, cfg.train.lr_power);
      Tensor loss = cross_entropy(forward(model, make_batch(data.train, idx)), labels);
      const double value = loss.item();
      if (!std::isfinite(value)) {
        if (write) dump_non_finite(out_dir, model, epoch, result.steps, opt.learning_rate, value);
        throw NonFiniteLossError("non-finite training loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(result.steps));
      }
      backward(loss);
      sgd_step(opt, params);
      loss_sum += value * static_cast<double>(idx.size());
      ++result.steps;
    }

    EpochLog entry{epoch, result.steps, opt.learning_rate, loss_sum / static_cast<double>(n),
                   validation_accuracy(model, data.val, cfg)};
    result.log.push_back(entry);
    if (entry.val_acc > result.best_val_acc) {
      result.best_val_acc = entry.val_acc;
      if (write) save_checkpoint(out_dir / "best.ckpt", params);
    }
    if (write) write_log(out_dir / "train_log.csv", result.log);
    if (cfg.train.target_val_acc > 0.0 && entry.val_acc >= cfg.train.target_val_acc) break;
  }
  if (write) save_checkpoint(out_dir / "final.ckpt", params);
  return result;
}

}  // namespace gsnet::cli
