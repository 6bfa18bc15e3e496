#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gsnet/data.hpp"
#include "gsnet/metrics.hpp"
#include "gsnet/model.hpp"
#include "gsnet_cli/config.hpp"

namespace gsnet::cli {

// Raised when the training loss stops being finite.
class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double val_acc = 0.0;
};

inline constexpr const char* kLogHeader = "epoch,step,lr,train_loss,val_acc";
std::string format_log_line(const EpochLog& e);

struct TrainResult {
  GsnetModel model;  // state after the last step
  std::vector<EpochLog> log;
  double best_val_acc = 0.0;
  std::size_t steps = 0;
};

// Integer level <-> class index; the half-level head spaces classes 0.5 apart.
std::size_t level_to_class(std::size_t level, bool half_level_head);
double class_to_level(std::size_t cls, bool half_level_head);

// SGD with momentum and polynomial decay over epochs * ceil(n/batch) steps.
// With a non-empty out_dir, writes train_log.csv, best.ckpt and final.ckpt
// there (epochs = 0 writes only the initial weights as final.ckpt).
TrainResult train_model(const RunConfig& cfg, const DatasetSplit& data, const std::filesystem::path& out_dir = {});

// Argmax levels for every item.
std::vector<double> predict_levels(const GsnetModel& model, const Dataset& data, bool half_level_head,
                                   std::size_t batch_size = 32);

EvalReport evaluate_model(const GsnetModel& model, const Dataset& data, const RunConfig& cfg);
double validation_accuracy(const GsnetModel& model, const Dataset& data, const RunConfig& cfg);

}  // namespace gsnet::cli
