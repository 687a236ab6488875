#pragma once

// Training runs on the spectral regression task, multi-seed aggregation, and
// CSV / JSON reports.

#include <iosfwd>
#include <string>

#include "tgrad/memory.hpp"
#include "tgrad/optim.hpp"
#include "tgrad/spectral.hpp"

namespace tgrad {

struct ExperimentConfig {
    std::string name = "adam";
    OptimizerKind kind = OptimizerKind::adam;
    OptimizerConfig opt;
    GaloreConfig galore;
    std::size_t epochs = 100;
    std::size_t batch = 32;
};

struct EpochRecord {
    std::size_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double test_loss = 0.0;
    std::vector<double> grad_stable_ranks;  // per mode, full-train gradient at the end of the epoch
    std::size_t moment_entries = 0;
};

struct RunRecord {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<EpochRecord> epochs;
    MemoryReport memory;
    double wall_seconds = 0.0;  // kept out of the CSV so reports stay reproducible

    double final_test() const;
    double final_train() const;
};

/// Memory figures of the configured optimizer for a complex weight of this shape.
MemoryReport config_memory(const ExperimentConfig& cfg, const Shape& weight_shape);

/// Trains the linear spectral layer from R = 0. Throws NumericalError on a
/// non-finite loss, naming the epoch and step.
RunRecord run_experiment(const SpectralDataset& data, const ExperimentConfig& cfg, std::uint64_t seed);

/// One run per seed; seed s uses task seed task.seed + s and optimizer seed s.
std::vector<RunRecord> run_seeds(const TaskSpec& task, const ExperimentConfig& cfg,
                                 const std::vector<std::uint64_t>& seeds);

struct RankRow {
    std::size_t rank = 0;  // 1-based
    std::string name;
    std::size_t runs = 0;
    double mean_test = 0.0;
    double stderr_test = 0.0;  // sample std / sqrt(runs); 0 for a single run
    double mean_train = 0.0;
};

/// Groups by name and sorts by mean final test loss, ties by name.
std::vector<RankRow> compare(const std::vector<RunRecord>& records);

inline constexpr std::size_t kReportModes = 4;

/// One row per (run, epoch); columns fixed regardless of tensor order.
void write_csv(std::ostream& os, const std::vector<RunRecord>& records);
void write_json(std::ostream& os, const std::vector<RunRecord>& records);
void write_ranking_csv(std::ostream& os, const std::vector<RankRow>& rows);

std::vector<RunRecord> read_json_records(std::istream& is);

}  // namespace tgrad
