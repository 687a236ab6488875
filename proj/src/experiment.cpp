#include "tgrad/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <istream>
#include <map>
#include <ostream>
#include <random>

#include <fmt/format.h>
#include <json.hpp>

namespace tgrad {

double RunRecord::final_test() const {
    if (epochs.empty()) throw ValidationError("run has no epochs");
    return epochs.back().test_loss;
}

double RunRecord::final_train() const {
    if (epochs.empty()) throw ValidationError("run has no epochs");
    return epochs.back().train_loss;
}

MemoryReport config_memory(const ExperimentConfig& cfg, const Shape& shape) {
    MemoryQuery q;
    q.dims = shape;
    q.is_complex = true;
    switch (cfg.kind) {
        case OptimizerKind::adam:
            q.method = MemoryMethod::adam;
            break;
        case OptimizerKind::galore:
            q.method = MemoryMethod::galore_matrix;
            q.ranks = {cfg.galore.rank};
            q.rollout = cfg.galore.rollout;
            break;
        case OptimizerKind::tensorgrad: {
            const Composition c = cfg.opt.order;
            if (c == Composition::sparse_only) {
                // no factors; moments and indices of the sparse branch only
                const auto k = static_cast<std::uint64_t>(sparse_count(cfg.opt.density, element_count(shape)));
                MemoryReport r;
                r.method = "sparse-only";
                r.weight_params = 2 * element_count(shape);
                r.moment_scalars = 4 * k;
                r.index_slots = k;
                r.table_states = 4 * k;
                r.complex_doubled = true;
                return r;
            }
            q.method = c == Composition::lr_only ? MemoryMethod::tucker : MemoryMethod::tensorgrad;
            q.ranks = resolve_ranks(cfg.opt, shape);
            q.density = cfg.opt.density;
            break;
        }
    }
    return memory_count(q);
}

RunRecord run_experiment(const SpectralDataset& data, const ExperimentConfig& cfg, std::uint64_t seed) {
    if (cfg.epochs == 0 || cfg.batch == 0) {
        throw ValidationError("epochs and batch size must be positive");
    }
    const auto start = std::chrono::steady_clock::now();
    const TaskSpec& spec = data.spec;
    OptimizerConfig ocfg = cfg.opt;
    ocfg.seed = seed;
    auto opt = make_optimizer<Complex>(cfg.kind, ocfg, cfg.galore);

    RunRecord rec;
    rec.name = cfg.name;
    rec.seed = seed;
    rec.memory = config_memory(cfg, spec.weight_shape());

    ComplexTensor r(spec.weight_shape());
    std::vector<std::size_t> order(data.train_size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::mt19937_64 rng(seed ^ 0xba7c4e5ULL);
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t b = 0; b < order.size(); b += cfg.batch) {
            const std::vector<std::size_t> rows(order.begin() + static_cast<std::ptrdiff_t>(b),
                                                order.begin() + static_cast<std::ptrdiff_t>(std::min(b + cfg.batch, order.size())));
            const LossGrad lg = linear_loss_grad(r, data.xs_train, data.y_train, spec, rows);
            ++step;
            if (!std::isfinite(lg.loss) || !all_finite(lg.grad)) {
                throw NumericalError(fmt::format("{}: non-finite loss at epoch {}, step {}", cfg.name, epoch, step));
            }
            opt->step(r, lg.grad);
        }
        const LossGrad full = linear_loss_grad(r, data.xs_train, data.y_train, spec);
        EpochRecord e;
        e.epoch = epoch;
        e.train_loss = full.loss;
        e.test_loss = linear_loss(r, data.xs_test, data.y_test, spec);
        if (!std::isfinite(e.train_loss) || !std::isfinite(e.test_loss)) {
            throw NumericalError(fmt::format("{}: non-finite loss after epoch {}", cfg.name, epoch));
        }
        e.grad_stable_ranks = stable_ranks(full.grad);
        e.moment_entries = opt->moment_entries();
        rec.epochs.push_back(std::move(e));
    }
    rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return rec;
}

std::vector<RunRecord> run_seeds(const TaskSpec& task, const ExperimentConfig& cfg,
                                 const std::vector<std::uint64_t>& seeds) {
    // runs are independent; each one stays sequential inside
    std::vector<std::future<RunRecord>> jobs;
    for (auto s : seeds) {
        jobs.push_back(std::async(std::launch::async, [&task, &cfg, s] {
            TaskSpec t = task;
            t.seed = task.seed + s;
            return run_experiment(generate_task(t), cfg, s);
        }));
    }
    std::vector<RunRecord> out;
    for (auto& j : jobs) out.push_back(j.get());
    return out;
}

std::vector<RankRow> compare(const std::vector<RunRecord>& records) {
    std::map<std::string, std::vector<const RunRecord*>> groups;
    for (const auto& r : records) groups[r.name].push_back(&r);
    std::vector<RankRow> rows;
    for (const auto& [name, runs] : groups) {
        RankRow row;
        row.name = name;
        row.runs = runs.size();
        for (const auto* r : runs) {
            row.mean_test += r->final_test();
            row.mean_train += r->final_train();
        }
        const double n = static_cast<double>(runs.size());
        row.mean_test /= n;
        row.mean_train /= n;
        if (runs.size() > 1) {
            double ss = 0.0;
            for (const auto* r : runs) ss += std::pow(r->final_test() - row.mean_test, 2);
            row.stderr_test = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
        }
        rows.push_back(row);
    }
    std::stable_sort(rows.begin(), rows.end(), [](const RankRow& a, const RankRow& b) {
        if (a.mean_test != b.mean_test) return a.mean_test < b.mean_test;
        return a.name < b.name;
    });
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i].rank = i + 1;
    return rows;
}

void write_csv(std::ostream& os, const std::vector<RunRecord>& records) {
    os << "name,seed,epoch,train_loss,test_loss";
    for (std::size_t k = 0; k < kReportModes; ++k) os << ",grad_sr_" << k;
    os << ",moment_entries,state_scalars\n";
    for (const auto& r : records) {
        for (const auto& e : r.epochs) {
            os << fmt::format("{},{},{},{:.17g},{:.17g}", r.name, r.seed, e.epoch, e.train_loss, e.test_loss);
            for (std::size_t k = 0; k < kReportModes; ++k) {
                os << ',';
                if (k < e.grad_stable_ranks.size()) os << fmt::format("{:.17g}", e.grad_stable_ranks[k]);
            }
            os << fmt::format(",{},{}\n", e.moment_entries, r.memory.value_state_scalars());
        }
    }
}

void write_ranking_csv(std::ostream& os, const std::vector<RankRow>& rows) {
    os << "rank,name,runs,mean_test_loss,stderr_test_loss,mean_train_loss\n";
    for (const auto& r : rows) {
        os << fmt::format("{},{},{},{:.17g},{:.17g},{:.17g}\n", r.rank, r.name, r.runs, r.mean_test, r.stderr_test,
                          r.mean_train);
    }
}

namespace {

nlohmann::json memory_json(const MemoryReport& m) {
    return {{"method", m.method},
            {"weight_params", m.weight_params},
            {"moment_scalars", m.moment_scalars},
            {"factor_scalars", m.factor_scalars},
            {"index_slots", m.index_slots},
            {"table_states", m.table_states},
            {"complex_doubled", m.complex_doubled}};
}

}  // namespace

void write_json(std::ostream& os, const std::vector<RunRecord>& records) {
    nlohmann::json runs = nlohmann::json::array();
    for (const auto& r : records) {
        nlohmann::json epochs = nlohmann::json::array();
        for (const auto& e : r.epochs) {
            epochs.push_back({{"epoch", e.epoch},
                              {"train_loss", e.train_loss},
                              {"test_loss", e.test_loss},
                              {"grad_stable_ranks", e.grad_stable_ranks},
                              {"moment_entries", e.moment_entries}});
        }
        runs.push_back({{"name", r.name},
                        {"seed", r.seed},
                        {"wall_seconds", r.wall_seconds},
                        {"memory", memory_json(r.memory)},
                        {"epochs", epochs}});
    }
    nlohmann::json ranking = nlohmann::json::array();
    for (const auto& row : compare(records)) {
        ranking.push_back({{"rank", row.rank},
                           {"name", row.name},
                           {"runs", row.runs},
                           {"mean_test_loss", row.mean_test},
                           {"stderr_test_loss", row.stderr_test},
                           {"mean_train_loss", row.mean_train}});
    }
    os << nlohmann::json{{"runs", runs}, {"ranking", ranking}}.dump(2) << '\n';
}

std::vector<RunRecord> read_json_records(std::istream& is) {
    nlohmann::json j;
    try {
        is >> j;
        std::vector<RunRecord> out;
        for (const auto& r : j.at("runs")) {
            RunRecord rec;
            rec.name = r.at("name").get<std::string>();
            rec.seed = r.at("seed").get<std::uint64_t>();
            rec.wall_seconds = r.value("wall_seconds", 0.0);
            const auto& m = r.at("memory");
            rec.memory.method = m.at("method").get<std::string>();
            rec.memory.weight_params = m.at("weight_params").get<std::uint64_t>();
            rec.memory.moment_scalars = m.at("moment_scalars").get<std::uint64_t>();
            rec.memory.factor_scalars = m.at("factor_scalars").get<std::uint64_t>();
            rec.memory.index_slots = m.at("index_slots").get<std::uint64_t>();
            rec.memory.table_states = m.at("table_states").get<std::uint64_t>();
            rec.memory.complex_doubled = m.at("complex_doubled").get<bool>();
            for (const auto& e : r.at("epochs")) {
                EpochRecord er;
                er.epoch = e.at("epoch").get<std::size_t>();
                er.train_loss = e.at("train_loss").get<double>();
                er.test_loss = e.at("test_loss").get<double>();
                er.grad_stable_ranks = e.at("grad_stable_ranks").get<std::vector<double>>();
                er.moment_entries = e.at("moment_entries").get<std::size_t>();
                rec.epochs.push_back(std::move(er));
            }
            out.push_back(std::move(rec));
        }
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("bad run record file: ") + e.what());
    }
}

}  // namespace tgrad
