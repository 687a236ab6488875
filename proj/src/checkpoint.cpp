#include "tgrad/checkpoint.hpp"

#include <fstream>
#include <set>

#include "tgrad/tgrd_io.hpp"

namespace tgrad {

using nlohmann::json;

json config_to_json(const OptimizerConfig& cfg) {
    return json{{"lr", cfg.lr},
                {"alpha", cfg.alpha},
                {"lambda", cfg.lambda},
                {"beta1", cfg.beta1},
                {"beta2", cfg.beta2},
                {"eps", cfg.eps},
                {"ranks", cfg.ranks},
                {"rank_fraction", cfg.rank_fraction},
                {"density", cfg.density},
                {"slice_counts", cfg.slice_counts},
                {"strategy", std::string(to_string(cfg.strategy))},
                {"order", std::string(to_string(cfg.order))},
                {"gap", cfg.gap},
                {"precision", std::string(to_string(cfg.precision))},
                {"weight_decay", cfg.weight_decay},
                {"reset_moments_on_refresh", cfg.reset_moments_on_refresh},
                {"hooi_max_sweeps", cfg.hooi.max_sweeps},
                {"hooi_tol", cfg.hooi.tol},
                {"seed", cfg.seed}};
}

OptimizerConfig config_from_json(const json& j, OptimizerConfig c) {
    if (!j.is_object()) {
        throw ValidationError("optimizer config must be a JSON object");
    }
    static const std::set<std::string> known{"lr",    "alpha",        "lambda",       "beta1",
                                             "beta2", "eps",          "ranks",        "rank_fraction",
                                             "density", "slice_counts", "strategy",   "order",
                                             "gap",   "precision",    "weight_decay", "reset_moments_on_refresh",
                                             "hooi_max_sweeps", "hooi_tol", "seed"};
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) {
            throw ValidationError("unknown optimizer config key '" + key + "'");
        }
    }
    try {
        auto get = [&](const char* key, auto& out) {
            if (j.contains(key)) {
                j.at(key).get_to(out);
            }
        };
        get("lr", c.lr);
        get("alpha", c.alpha);
        get("lambda", c.lambda);
        get("beta1", c.beta1);
        get("beta2", c.beta2);
        get("eps", c.eps);
        get("ranks", c.ranks);
        get("rank_fraction", c.rank_fraction);
        get("density", c.density);
        get("slice_counts", c.slice_counts);
        get("gap", c.gap);
        get("weight_decay", c.weight_decay);
        get("reset_moments_on_refresh", c.reset_moments_on_refresh);
        get("hooi_max_sweeps", c.hooi.max_sweeps);
        get("hooi_tol", c.hooi.tol);
        get("seed", c.seed);
        if (j.contains("strategy")) c.strategy = parse_strategy(j.at("strategy").get<std::string>());
        if (j.contains("order")) c.order = parse_composition(j.at("order").get<std::string>());
        if (j.contains("precision")) c.precision = parse_precision(j.at("precision").get<std::string>());
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad optimizer config: ") + e.what());
    }
    c.validate();
    return c;
}

namespace {

template <TensorScalar T> Tensor<T> matrix_to_tensor(const Matrix<T>& m) {
    Tensor<T> t(Shape{static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            t.at({static_cast<std::size_t>(i), static_cast<std::size_t>(j)}) = m(i, j);
        }
    }
    return t;
}

template <TensorScalar T> Matrix<T> tensor_to_matrix(const Tensor<T>& t) {
    if (t.order() != 2) {
        throw ValidationError("checkpoint: factor file is not a matrix");
    }
    Matrix<T> m(static_cast<Eigen::Index>(t.dim(0)), static_cast<Eigen::Index>(t.dim(1)));
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            m(i, j) = t.at({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
        }
    }
    return m;
}

template <TensorScalar T>
void save_pair(const std::filesystem::path& dir, const std::string& stem, const MomentPair<T>& mp, json& manifest) {
    if (mp.m.empty()) {
        return;
    }
    write_tgrd(dir / (stem + "_m.tgrd"), mp.m);
    write_tgrd(dir / (stem + "_v.tgrd"), mp.v);
    manifest["moments"].push_back(stem);
}

}  // namespace

template <TensorScalar T>
void save_checkpoint(const std::filesystem::path& dir, const TensorGradState<T>& st, const OptimizerConfig& cfg) {
    std::filesystem::create_directories(dir);
    json m;
    m["format"] = "tgrad-checkpoint";
    m["version"] = 1;
    m["dtype"] = is_complex_v<T> ? "complex" : "real";
    m["config"] = config_to_json(cfg);
    m["t"] = st.t;
    m["moment_t"] = st.moment_t;
    m["refreshes"] = st.refreshes;
    m["omega"] = {{"shape", st.omega.shape}, {"offsets", st.omega.offsets}};
    m["mask"] = {{"shape", st.mask.shape}, {"modes", st.mask.modes}};
    m["factors"] = json::array();
    m["moments"] = json::array();
    for (std::size_t n = 0; n < st.factors.order(); ++n) {
        const auto name = "factor_" + std::to_string(n) + ".tgrd";
        write_tgrd(dir / name, matrix_to_tensor(st.factors.factors[n]));
        m["factors"].push_back(name);
    }
    save_pair(dir, "lowrank", st.lowrank, m);
    save_pair(dir, "sparse", st.sparse, m);
    std::ofstream os(dir / "manifest.json");
    if (!os) {
        throw ValidationError("cannot write checkpoint manifest in " + dir.string());
    }
    os << m.dump(2) << '\n';
}

template <TensorScalar T> Checkpoint<T> load_checkpoint(const std::filesystem::path& dir) {
    std::ifstream is(dir / "manifest.json");
    if (!is) {
        throw ValidationError("no checkpoint manifest in " + dir.string());
    }
    Checkpoint<T> ck;
    try {
        const json m = json::parse(is);
        if (m.at("format") != "tgrad-checkpoint" || m.at("version") != 1) {
            throw ValidationError("unsupported checkpoint format");
        }
        if (m.at("dtype") != (is_complex_v<T> ? "complex" : "real")) {
            throw ValidationError("checkpoint dtype mismatch");
        }
        ck.config = config_from_json(m.at("config"));
        auto& st = ck.state;
        m.at("t").get_to(st.t);
        m.at("moment_t").get_to(st.moment_t);
        m.at("refreshes").get_to(st.refreshes);
        m.at("omega").at("shape").get_to(st.omega.shape);
        m.at("omega").at("offsets").get_to(st.omega.offsets);
        m.at("mask").at("shape").get_to(st.mask.shape);
        m.at("mask").at("modes").get_to(st.mask.modes);
        for (const auto& name : m.at("factors")) {
            st.factors.factors.push_back(tensor_to_matrix(read_tgrd<T>(dir / name.get<std::string>())));
        }
        for (const auto& stem : m.at("moments")) {
            const auto s = stem.get<std::string>();
            MomentPair<T> mp{read_tgrd<T>(dir / (s + "_m.tgrd")), read_tgrd<double>(dir / (s + "_v.tgrd"))};
            (s == "lowrank" ? st.lowrank : st.sparse) = std::move(mp);
        }
    } catch (const json::exception& e) {
        throw ValidationError(std::string("bad checkpoint manifest: ") + e.what());
    }
    return ck;
}

template void save_checkpoint(const std::filesystem::path&, const TensorGradState<double>&, const OptimizerConfig&);
template void save_checkpoint(const std::filesystem::path&, const TensorGradState<Complex>&, const OptimizerConfig&);
template Checkpoint<double> load_checkpoint(const std::filesystem::path&);
template Checkpoint<Complex> load_checkpoint(const std::filesystem::path&);

}  // namespace tgrad
