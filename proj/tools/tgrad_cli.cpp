// tgrad_cli: synthetic spectral-regression experiments, theory checks and memory tables.
// Exit codes: 0 ok, 2 validation error (bad flags, config or data), 3 numerical abort.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <fmt/core.h>

#include "CLI11.hpp"
#include "json.hpp"
#include "tgrad/checkpoint.hpp"
#include "tgrad/experiment.hpp"
#include "tgrad/memory.hpp"
#include "tgrad/tgrd_io.hpp"
#include "tgrad/theory.hpp"

using namespace tgrad;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// ---------------------------------------------------------------------------
// run description: JSON file first, then flags on top

struct RunSpec {
    TaskSpec task;
    ExperimentConfig exp;
    std::uint64_t first_seed = 0;
    std::size_t seed_count = 1;
};

json task_to_json(const TaskSpec& t) {
    return json{{"n", t.n},
                {"dim", t.dim},
                {"c_in", t.c_in},
                {"c_out", t.c_out},
                {"modes", t.modes},
                {"train", t.train},
                {"test", t.test},
                {"noise", t.noise},
                {"grf_alpha", t.grf_alpha},
                {"grf_tau", t.grf_tau},
                {"grf_sigma", t.grf_sigma},
                {"data_rank", t.data_rank},
                {"target_ranks", t.target_ranks},
                {"target_spikes", t.target_spikes},
                {"spike_scale", t.spike_scale},
                {"h1_loss", t.h1_loss},
                {"seed", t.seed}};
}

TaskSpec task_from_json(const json& j, TaskSpec t) {
    if (!j.is_object()) throw ValidationError("task config must be a JSON object");
    const json known = task_to_json(t);
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ValidationError("unknown task config key '" + key + "'");
    }
    auto get = [&](const char* key, auto& out) {
        if (j.contains(key)) j.at(key).get_to(out);
    };
    try {
        get("n", t.n);
        get("dim", t.dim);
        get("c_in", t.c_in);
        get("c_out", t.c_out);
        get("modes", t.modes);
        get("train", t.train);
        get("test", t.test);
        get("noise", t.noise);
        get("grf_alpha", t.grf_alpha);
        get("grf_tau", t.grf_tau);
        get("grf_sigma", t.grf_sigma);
        get("data_rank", t.data_rank);
        get("target_ranks", t.target_ranks);
        get("target_spikes", t.target_spikes);
        get("spike_scale", t.spike_scale);
        get("h1_loss", t.h1_loss);
        get("seed", t.seed);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("task config: ") + e.what());
    }
    return t;
}

json read_json_file(const std::string& path) {
    if (fs::path(path).extension() == ".toml") {
        throw ValidationError("TOML configs are not supported; use JSON (" + path + ")");
    }
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ValidationError("config " + path + ": " + e.what());
    }
}

void apply_config_file(RunSpec& r, const std::string& path) {
    const json j = read_json_file(path);
    if (!j.is_object()) throw ValidationError("config root must be an object");
    static const std::set<std::string> known{"task", "optimizer", "galore", "kind", "name", "epochs", "batch", "seed", "seeds"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ValidationError("unknown config key '" + key + "'");
    }
    try {
        if (j.contains("task")) r.task = task_from_json(j["task"], r.task);
        if (j.contains("optimizer")) r.exp.opt = config_from_json(j["optimizer"], r.exp.opt);
        if (j.contains("galore")) {
            const auto& g = j["galore"];
            if (g.contains("rollout")) g.at("rollout").get_to(r.exp.galore.rollout);
            if (g.contains("rank")) g.at("rank").get_to(r.exp.galore.rank);
        }
        if (j.contains("kind")) r.exp.kind = parse_optimizer_kind(j["kind"].get<std::string>());
        if (j.contains("name")) j["name"].get_to(r.exp.name);
        if (j.contains("epochs")) j["epochs"].get_to(r.exp.epochs);
        if (j.contains("batch")) j["batch"].get_to(r.exp.batch);
        if (j.contains("seed")) j["seed"].get_to(r.first_seed);
        if (j.contains("seeds")) j["seeds"].get_to(r.seed_count);
    } catch (const json::exception& e) {
        throw ValidationError(std::string("config: ") + e.what());
    }
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            std::size_t used = 0;
            const long long v = std::stoll(item, &used);
            if (used != item.size() || v < 0) throw std::invalid_argument(item);
            out.push_back(static_cast<std::size_t>(v));
        } catch (const std::exception&) {
            throw ValidationError("expected a comma-separated list of non-negative integers, got '" + text + "'");
        }
    }
    return out;
}

// Flags stored as strings/optionals so that only the ones given override the file.
struct TaskFlags {
    std::optional<std::size_t> n, dim, c_in, c_out, modes, train, test, data_rank, spikes;
    std::optional<double> noise, spike_scale;
    std::optional<std::uint64_t> task_seed;
    std::string target_ranks;
    bool h1 = false;

    void add(CLI::App* app) {
        app->add_option("--n", n, "grid points per axis (power of two)");
        app->add_option("--dim", dim, "spatial dimensions (1 or 2)");
        app->add_option("--c-in", c_in, "input channels");
        app->add_option("--c-out", c_out, "output channels");
        app->add_option("--modes", modes, "retained Fourier modes per axis");
        app->add_option("--train-size", train, "training samples");
        app->add_option("--test-size", test, "test samples");
        app->add_option("--noise", noise, "target noise relative to target RMS");
        app->add_option("--data-rank", data_rank, "input channel profiles span this many directions (0 = full)");
        app->add_option("--target-ranks", target_ranks, "Tucker ranks of the target multiplier, e.g. 2,2,4");
        app->add_option("--spikes", spikes, "isolated large entries added to the target multiplier");
        app->add_option("--spike-scale", spike_scale, "spike size relative to the largest low-rank entry");
        app->add_option("--task-seed", task_seed, "task seed (run s uses task-seed + s)");
        app->add_flag("--h1", h1, "train and report in the H1 norm");
    }

    void apply(TaskSpec& t) const {
        if (n) t.n = *n;
        if (dim) t.dim = *dim;
        if (c_in) t.c_in = *c_in;
        if (c_out) t.c_out = *c_out;
        if (modes) t.modes = *modes;
        if (train) t.train = *train;
        if (test) t.test = *test;
        if (noise) t.noise = *noise;
        if (data_rank) t.data_rank = *data_rank;
        if (!target_ranks.empty()) t.target_ranks = parse_size_list(target_ranks);
        if (spikes) t.target_spikes = *spikes;
        if (spike_scale) t.spike_scale = *spike_scale;
        if (task_seed) t.seed = *task_seed;
        if (h1) t.h1_loss = true;
    }
};

struct TrainFlags {
    std::string config, optimizer, order, rank, strategy, precision, name;
    std::optional<double> density, alpha, lambda, lr, weight_decay;
    std::optional<std::int64_t> gap;
    std::optional<std::size_t> epochs, batch, seeds, rollout;
    std::optional<std::uint64_t> seed;

    void add(CLI::App* app) {
        app->add_option("--config", config, "JSON run config; flags override its values");
        app->add_option("--optimizer", optimizer, "adam | tensorgrad | galore");
        app->add_option("--order", order, "us-lr | lr-us | ss-lr | lr-ss | lr+us | lr-only | sparse-only");
        app->add_option("--rank", rank, "rank fraction (0.25), per-mode ranks (4,4,8), or the GaLore matrix rank");
        app->add_option("--density", density, "sparse share of entries");
        app->add_option("--strategy", strategy, "topk | randk | probk");
        app->add_option("--precision", precision, "full | mixed1 | mixed2");
        app->add_option("--gap", gap, "steps between refreshes of the index set and factors");
        app->add_option("--alpha", alpha, "scale on the low-rank update");
        app->add_option("--lambda", lambda, "scale on the sparse update");
        app->add_option("--lr", lr, "learning rate");
        app->add_option("--weight-decay", weight_decay, "decoupled weight decay");
        app->add_option("--rollout", rollout, "GaLore: leading modes that form the matrix rows");
        app->add_option("--epochs", epochs, "training epochs");
        app->add_option("--batch", batch, "minibatch size");
        app->add_option("--seed", seed, "first seed");
        app->add_option("--seeds", seeds, "number of seeds");
        app->add_option("--name", name, "run name used in reports");
    }

    void apply(RunSpec& r) const {
        if (!optimizer.empty()) r.exp.kind = parse_optimizer_kind(optimizer);
        auto& o = r.exp.opt;
        if (!order.empty()) o.order = parse_composition(order);
        if (!rank.empty()) {
            if (rank.find(',') != std::string::npos) {
                o.ranks = parse_size_list(rank);
            } else {
                double v = 0.0;
                try {
                    std::size_t used = 0;
                    v = std::stod(rank, &used);
                    if (used != rank.size()) throw std::invalid_argument(rank);
                } catch (const std::exception&) {
                    throw ValidationError("--rank: cannot parse '" + rank + "'");
                }
                if (r.exp.kind == OptimizerKind::galore) {
                    if (v < 1.0 || v != std::floor(v)) throw ValidationError("--rank: GaLore takes an integer matrix rank");
                    r.exp.galore.rank = static_cast<std::size_t>(v);
                } else {
                    o.ranks.clear();
                    o.rank_fraction = v;
                }
            }
        }
        if (density) o.density = *density;
        if (!strategy.empty()) o.strategy = parse_strategy(strategy);
        if (!precision.empty()) o.precision = parse_precision(precision);
        if (gap) o.gap = *gap;
        if (alpha) o.alpha = *alpha;
        if (lambda) o.lambda = *lambda;
        if (lr) o.lr = *lr;
        if (weight_decay) o.weight_decay = *weight_decay;
        if (rollout) r.exp.galore.rollout = *rollout;
        if (epochs) r.exp.epochs = *epochs;
        if (batch) r.exp.batch = *batch;
        if (seed) r.first_seed = *seed;
        if (seeds) r.seed_count = *seeds;
        if (!name.empty()) r.exp.name = name;
    }
};

std::string default_name(const ExperimentConfig& c) {
    switch (c.kind) {
        case OptimizerKind::adam:
            return "adam";
        case OptimizerKind::galore:
            return fmt::format("galore-d{}-r{}", c.galore.rollout, c.galore.rank);
        case OptimizerKind::tensorgrad:
            break;
    }
    return fmt::format("{}-{}", to_string(c.opt.order), to_string(c.opt.precision));
}

RunSpec resolve(const TaskFlags& tf, const TrainFlags& trf) {
    RunSpec r;
    r.exp.name.clear();
    if (!trf.config.empty()) apply_config_file(r, trf.config);
    tf.apply(r.task);
    trf.apply(r);
    if (r.exp.name.empty()) r.exp.name = default_name(r.exp);
    if (r.seed_count == 0) throw ValidationError("--seeds must be at least 1");
    if (r.exp.epochs == 0 || r.exp.batch == 0) throw ValidationError("epochs and batch must be positive");
    r.task.validate();
    r.exp.opt.validate();
    return r;
}

std::vector<std::uint64_t> seed_list(const RunSpec& r) {
    std::vector<std::uint64_t> out;
    for (std::size_t i = 0; i < r.seed_count; ++i) out.push_back(r.first_seed + i);
    return out;
}

// ---------------------------------------------------------------------------
// output helpers

std::ofstream open_out(const std::string& path) {
    if (const auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ValidationError("cannot write " + path);
    return os;
}

void write_records(const std::string& out, const std::vector<RunRecord>& records) {
    if (out.empty()) {
        write_csv(std::cout, records);
        return;
    }
    auto os = open_out(out);
    if (fs::path(out).extension() == ".json") {
        write_json(os, records);
    } else {
        write_csv(os, records);
    }
}

void print_ranking(const std::vector<RunRecord>& records, std::ostream& os) {
    os << fmt::format("{:<4} {:<28} {:>4} {:>12} {:>12} {:>12}\n", "rank", "name", "runs", "test", "stderr", "train");
    for (const auto& row : compare(records)) {
        os << fmt::format("{:<4} {:<28} {:>4} {:>12.6f} {:>12.6f} {:>12.6f}\n", row.rank, row.name, row.runs, row.mean_test,
                          row.stderr_test, row.mean_train);
    }
}

// ---------------------------------------------------------------------------
// gen / train

void save_dataset(const fs::path& dir, const SpectralDataset& d) {
    fs::create_directories(dir);
    write_tgrd(dir / "x_train.tgrd", d.x_train);
    write_tgrd(dir / "y_train.tgrd", d.y_train);
    write_tgrd(dir / "x_test.tgrd", d.x_test);
    write_tgrd(dir / "y_test.tgrd", d.y_test);
    write_tgrd(dir / "r_star.tgrd", d.r_star);
    std::ofstream os(dir / "task.json");
    if (!os) throw ValidationError("cannot write " + (dir / "task.json").string());
    os << task_to_json(d.spec).dump(2) << "\n";
}

SpectralDataset load_dataset(const fs::path& dir) {
    std::ifstream in(dir / "task.json");
    if (!in) throw ValidationError("no task.json in " + dir.string());
    SpectralDataset d;
    try {
        d.spec = task_from_json(json::parse(in), {});
    } catch (const json::exception& e) {
        throw ValidationError(std::string("task.json: ") + e.what());
    }
    d.spec.validate();
    d.x_train = read_tgrd<double>(dir / "x_train.tgrd");
    d.y_train = read_tgrd<double>(dir / "y_train.tgrd");
    d.x_test = read_tgrd<double>(dir / "x_test.tgrd");
    d.y_test = read_tgrd<double>(dir / "y_test.tgrd");
    d.r_star = read_tgrd<Complex>(dir / "r_star.tgrd");
    const std::size_t g = d.spec.grid_size();
    auto check = [&](const RealTensor& t, std::size_t ch, const char* what) {
        if (t.order() != 3 || t.dim(1) != ch || t.dim(2) != g || t.dim(0) == 0) {
            throw ValidationError(fmt::format("{}: shape {} does not fit task.json", what, shape_string(t.shape())));
        }
    };
    check(d.x_train, d.spec.c_in, "x_train");
    check(d.x_test, d.spec.c_in, "x_test");
    check(d.y_train, d.spec.c_out, "y_train");
    check(d.y_test, d.spec.c_out, "y_test");
    if (d.x_train.dim(0) != d.y_train.dim(0) || d.x_test.dim(0) != d.y_test.dim(0)) {
        throw ValidationError("input and target sample counts differ");
    }
    if (d.r_star.shape() != d.spec.weight_shape()) throw ValidationError("r_star shape does not fit task.json");
    d.xs_train = truncated_spectra(d.x_train, d.spec);
    d.xs_test = truncated_spectra(d.x_test, d.spec);
    return d;
}

int cmd_gen(const TaskFlags& tf, const std::string& config, const std::string& out) {
    RunSpec r;
    if (!config.empty()) apply_config_file(r, config);
    tf.apply(r.task);
    const auto d = generate_task(r.task);
    save_dataset(out, d);
    fmt::print("wrote {} train / {} test samples, weight {} to {}\n", d.train_size(), d.test_size(),
               shape_string(d.spec.weight_shape()), out);
    return 0;
}

int cmd_train(const TaskFlags& tf, const TrainFlags& trf, const std::string& data, const std::string& out) {
    const RunSpec r = resolve(tf, trf);
    std::vector<RunRecord> records;
    if (data.empty()) {
        records = run_seeds(r.task, r.exp, seed_list(r));
    } else {
        const auto d = load_dataset(data);
        for (auto s : seed_list(r)) records.push_back(run_experiment(d, r.exp, s));
    }
    write_records(out, records);
    print_ranking(records, out.empty() ? std::cerr : std::cout);
    return 0;
}

// ---------------------------------------------------------------------------
// ablate: composition orders at 5% + 20%, single-branch baselines at 25%, and a lambda sweep

int cmd_ablate(const TaskFlags& tf, const TrainFlags& trf, const std::string& out, const std::string& ranking_out) {
    const RunSpec base = resolve(tf, trf);
    std::vector<ExperimentConfig> grid;
    auto add = [&](std::string name, OptimizerKind kind, Composition order, double density, double fraction, double lambda) {
        ExperimentConfig c = base.exp;
        c.name = std::move(name);
        c.kind = kind;
        c.opt.order = order;
        c.opt.density = density;
        c.opt.ranks.clear();
        c.opt.rank_fraction = fraction;
        c.opt.lambda = lambda;
        grid.push_back(c);
    };
    add("adam", OptimizerKind::adam, Composition::us_lr, 0.05, 0.2, 1.0);
    add("lr-25", OptimizerKind::tensorgrad, Composition::lr_only, 0.05, 0.25, 1.0);
    add("us-25", OptimizerKind::tensorgrad, Composition::sparse_only, 0.25, 0.2, 1.0);
    for (auto order : {Composition::us_lr, Composition::lr_us, Composition::ss_lr, Composition::lr_ss, Composition::lr_us_sum}) {
        for (double lambda : {0.5, 1.0, 2.0}) {
            add(fmt::format("{}-5+20-l{}", to_string(order), lambda), OptimizerKind::tensorgrad, order, 0.05, 0.2, lambda);
        }
    }
    std::vector<RunRecord> records;
    for (const auto& c : grid) {
        auto r = run_seeds(base.task, c, seed_list(base));
        fmt::print(stderr, "{:<24} done\n", c.name);
        records.insert(records.end(), r.begin(), r.end());
    }
    write_records(out, records);
    if (!ranking_out.empty()) {
        auto os = open_out(ranking_out);
        write_ranking_csv(os, compare(records));
    }
    print_ranking(records, out.empty() ? std::cerr : std::cout);
    return 0;
}

// ---------------------------------------------------------------------------
// theory

struct TheoryFlags {
    std::string suite = "all";
    std::size_t problems = 20;
    std::size_t steps = 2000;
    std::uint64_t seed = 1;
};

void theory_lemma(const TheoryFlags& f, std::ostream& os) {
    os << "suite,seed,shared_basis,mode,min_slack,rows,predicted_decay,fitted_decay\n";
    for (std::uint64_t s = f.seed; s < f.seed + f.problems; ++s) {
        for (bool shared : {true, false}) {
            ProblemSpec spec;
            spec.seed = s;
            spec.shared_eigenbasis = shared;
            const auto p = random_problem(spec);
            const auto tr = simulate_parametric_sgd(p, f.steps, true);
            for (std::size_t k = 0; k < p.shape().size(); ++k) {
                const auto op = build_mode_operator(p, k);
                const auto chk = check_stable_rank_bound(tr, op, 0);
                const auto fit = fitted_decay_factor(tr, op, 50);
                os << fmt::format("lemma,{},{},{},{:.6e},{},{:.8f},{}\n", s, shared ? 1 : 0, k, chk.min_margin, chk.rows.size(),
                                  predicted_decay_factor(op, tr.eta), fit ? fmt::format("{:.8f}", *fit) : "");
            }
        }
    }
}

void theory_contraction(const TheoryFlags& f, std::ostream& os) {
    os << "suite,seed,kappa,max_violation,steps_to_tol,step_budget\n";
    for (std::uint64_t s = f.seed; s < f.seed + f.problems; ++s) {
        ProblemSpec spec;
        spec.seed = s;
        spec.shared_eigenbasis = false;
        spec.eig_lo = 0.3;
        const auto p = random_problem(spec);
        std::mt19937_64 rng(s);
        std::vector<Mat> proj;
        for (std::size_t k = 0; k < p.shape().size(); ++k) proj.push_back(random_orthogonal(p.shape()[k], rng).leftCols(k == 2 ? 2 : 3));
        const auto rep = check_contraction(p, proj, 1e-8, 20000);
        os << fmt::format("contraction,{},{:.6e},{:.3e},{},{}\n", s, rep.kappa, rep.max_violation,
                          rep.steps_to_tol ? std::to_string(*rep.steps_to_tol) : "", rep.step_budget);
    }
}

void theory_modes(const TheoryFlags& f, std::ostream& os) {
    os << "suite,seed,projection,mode,long_run_stable_rank\n";
    for (std::uint64_t s = f.seed; s < f.seed + f.problems; ++s) {
        OuterProductSpec spec;
        spec.shape = {6, 6, 6, 6};
        spec.terms = 8;
        spec.data_rank = 2;
        spec.seed = s;
        const auto p = outer_product_problem(spec);
        const std::vector<std::pair<const char*, ProjectionSpec>> runs{
            {"none", {ProjectionKind::none, {}, 1, 1}},
            {"galore-d1", {ProjectionKind::galore, {5}, 1, 100}},
            {"tucker", {ProjectionKind::tucker, {5, 5, 5, 5}, 1, 100}}};
        for (const auto& [name, ps] : runs) {
            const auto run = simulate_projected(p, ps, std::min<std::size_t>(f.steps, 3000));
            std::size_t last = 0;
            for (std::size_t t = 0; t < run.grad_norms.size(); ++t) {
                if (run.grad_norms[t] > 1e-9 * run.grad_norms[0]) last = t;
            }
            for (std::size_t k = 0; k < run.stable_ranks[last].size(); ++k) {
                os << fmt::format("modes,{},{},{},{:.6f}\n", s, name, k, run.stable_ranks[last][k]);
            }
        }
    }
}

void theory_robust(const TheoryFlags& f, std::ostream& os) {
    os << "suite,seed,scheme,max_error,mean_error,p99_error\n";
    const std::vector<Scheme> schemes{{"us-lr-5+20", Composition::us_lr, 0.05, 0.2, SelectStrategy::topk},
                                      {"lr-us-5+20", Composition::lr_us, 0.05, 0.2, SelectStrategy::topk},
                                      {"lr-25", Composition::lr_only, 0.05, 0.25, SelectStrategy::topk}};
    for (std::uint64_t s = f.seed; s < f.seed + f.problems; ++s) {
        const auto g = planted_lowrank_plus_spikes({16, 16, 16}, {3, 3, 3}, 20, 5.0, 100 + s);
        for (const auto& sc : schemes) {
            const auto st = error_stats(g, robust_reconstruct(g, sc, s));
            os << fmt::format("robust,{},{},{:.6e},{:.6e},{:.6e}\n", s, sc.name, st.max, st.mean, st.p99);
        }
    }
}

int cmd_theory(const TheoryFlags& f, const std::string& out) {
    static const std::set<std::string> suites{"all", "lemma", "contraction", "modes", "robust"};
    if (!suites.contains(f.suite)) throw ValidationError("unknown theory suite '" + f.suite + "'");
    if (f.problems == 0 || f.steps < 10) throw ValidationError("need at least one problem and 10 steps");
    std::ofstream file;
    if (!out.empty()) file = open_out(out);
    std::ostream& os = out.empty() ? std::cout : file;
    const bool all = f.suite == "all";
    if (all || f.suite == "lemma") theory_lemma(f, os);
    if (all || f.suite == "contraction") theory_contraction(f, os);
    if (all || f.suite == "modes") theory_modes(f, os);
    if (all || f.suite == "robust") theory_robust(f, os);
    return 0;
}

// ---------------------------------------------------------------------------
// memory

int cmd_memory(const std::string& dims_text, const std::string& ranks_text, std::size_t galore_rank, std::size_t rollout,
               double density, bool is_complex) {
    const Shape dims = parse_size_list(dims_text);
    const auto ranks = parse_size_list(ranks_text);
    std::vector<MemoryQuery> qs{{MemoryMethod::adam, dims, {}, 0.0, rollout, is_complex},
                                {MemoryMethod::galore_matrix, dims, {galore_rank}, 0.0, rollout, is_complex},
                                {MemoryMethod::tucker, dims, ranks, 0.0, rollout, is_complex},
                                {MemoryMethod::tensorgrad, dims, ranks, density, rollout, is_complex}};
    fmt::print("{:<12} {:>14} {:>14} {:>14} {:>12} {:>16}\n", "method", "weights", "moments", "factors", "indices", "table_states");
    for (const auto& q : qs) {
        const auto r = memory_count(q);
        fmt::print("{:<12} {:>14} {:>14} {:>14} {:>12} {:>16}\n", r.method, r.weight_params, r.moment_scalars, r.factor_scalars,
                   r.index_slots, r.table_states);
    }
    if (dims.size() == 4 && dims[0] == dims[1] && dims[2] == dims[3] && !ranks.empty() &&
        std::all_of(ranks.begin(), ranks.end(), [&](std::size_t x) { return x == ranks[0]; })) {
        const auto pm = p_matrix(dims[0], dims[2], ranks[0]);
        const auto pt = p_tensor(dims[0], dims[2], ranks[0]);
        fmt::print("P_matrix={} P_tensor={} ratio={:.2f}\n", pm, pt, static_cast<double>(pm) / static_cast<double>(pt));
    }
    return 0;
}

// ---------------------------------------------------------------------------
// report

int cmd_report(const std::vector<std::string>& inputs, const std::string& out, const std::string& format) {
    if (format != "csv" && format != "json" && format != "ranking") {
        throw ValidationError("--format must be csv, json or ranking");
    }
    std::vector<RunRecord> records;
    for (const auto& path : inputs) {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open " + path);
        auto r = read_json_records(in);
        records.insert(records.end(), r.begin(), r.end());
    }
    std::ofstream file;
    if (!out.empty()) file = open_out(out);
    std::ostream& os = out.empty() ? std::cout : file;
    if (format == "csv") {
        write_csv(os, records);
    } else if (format == "json") {
        write_json(os, records);
    } else {
        write_ranking_csv(os, compare(records));
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tgrad_cli: robust gradient compression experiments"};
    app.require_subcommand(1);

    TaskFlags gen_task, train_task, ablate_task;
    TrainFlags train_flags, ablate_flags;
    std::string gen_out = "data", gen_config, train_out, train_data, ablate_out, ablate_ranking, theory_out, report_out;
    std::string report_format = "ranking";
    std::vector<std::string> report_inputs;
    TheoryFlags theory;
    std::string mem_dims = "64,64,128,128", mem_ranks = "16,16,16,16";
    std::size_t mem_galore_rank = 256, mem_rollout = 2;
    double mem_density = 0.05;
    bool mem_complex = false;

    auto* gen = app.add_subcommand("gen", "generate a task and write it as TGRD files");
    gen_task.add(gen);
    gen->add_option("--config", gen_config, "JSON config (its task section is used)");
    gen->add_option("--out", gen_out, "output directory");

    auto* train = app.add_subcommand("train", "train the spectral layer, one run per seed");
    train_task.add(train);
    train_flags.add(train);
    train->add_option("--data", train_data, "directory written by gen (default: generate from the task flags)");
    train->add_option("--out", train_out, "records file (.json or CSV; default CSV on stdout)");

    auto* ablate = app.add_subcommand("ablate", "composition orders, single-branch baselines and a lambda sweep");
    ablate_task.add(ablate);
    ablate_flags.add(ablate);
    ablate->add_option("--out", ablate_out, "records file (.json or CSV)");
    ablate->add_option("--ranking", ablate_ranking, "ranking CSV");

    auto* th = app.add_subcommand("theory", "numerical checks on parametric gradient problems (CSV)");
    th->add_option("--suite", theory.suite, "all | lemma | contraction | modes | robust");
    th->add_option("--problems", theory.problems, "problems per suite");
    th->add_option("--steps", theory.steps, "SGD steps");
    th->add_option("--seed", theory.seed, "first problem seed");
    th->add_option("--out", theory_out, "CSV file (default stdout)");

    auto* mem = app.add_subcommand("memory", "optimizer-state counts for a weight shape");
    mem->add_option("--dims", mem_dims, "weight dimensions");
    mem->add_option("--ranks", mem_ranks, "Tucker ranks per mode");
    mem->add_option("--galore-rank", mem_galore_rank, "matrix rank for GaLore");
    mem->add_option("--rollout", mem_rollout, "GaLore: leading modes forming the rows");
    mem->add_option("--density", mem_density, "sparse share for tensorgrad");
    mem->add_flag("--complex", mem_complex, "complex weights (value scalars doubled)");

    auto* rep = app.add_subcommand("report", "merge JSON records and emit CSV, JSON or a ranking");
    rep->add_option("inputs", report_inputs, "JSON records files")->required();
    rep->add_option("--format", report_format, "csv | json | ranking");
    rep->add_option("--out", report_out, "output file (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*gen) return cmd_gen(gen_task, gen_config, gen_out);
        if (*train) return cmd_train(train_task, train_flags, train_data, train_out);
        if (*ablate) return cmd_ablate(ablate_task, ablate_flags, ablate_out, ablate_ranking);
        if (*th) return cmd_theory(theory, theory_out);
        if (*mem) return cmd_memory(mem_dims, mem_ranks, mem_galore_rank, mem_rollout, mem_density, mem_complex);
        if (*rep) return cmd_report(report_inputs, report_out, report_format);
    } catch (const ValidationError& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 2;
    } catch (const NumericalError& e) {
        fmt::print(stderr, "numerical abort: {}\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        fmt::print(stderr, "error: {}\n", e.what());
        return 1;
    }
    return 0;
}
