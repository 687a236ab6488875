#include <gtest/gtest.h>

#include <filesystem>

#include "helpers.hpp"
#include "tgrad/checkpoint.hpp"

using namespace tgrad;

TEST(Checkpoint, ResumedRunMatchesUninterrupted) {
    for (auto order : {Composition::us_lr, Composition::lr_ss, Composition::sparse_only}) {
        const testutil::Quadratic<Complex> q({4, 3, 4}, 3);
        OptimizerConfig cfg;
        cfg.lr = 0.02;
        cfg.gap = 4;
        cfg.order = order;
        cfg.rank_fraction = 0.4;
        cfg.density = 0.1;
        cfg.seed = 11;

        TensorGradState<Complex> st;
        ComplexTensor w(q.target.shape());
        for (int i = 0; i < 6; ++i) tensorgrad_step(w, q.grad(w), st, cfg);

        const auto dir = std::filesystem::temp_directory_path() / "tgrad_ckpt_test";
        std::filesystem::remove_all(dir);
        save_checkpoint(dir, st, cfg);
        auto ck = load_checkpoint<Complex>(dir);
        ComplexTensor w2 = w;
        for (int i = 0; i < 7; ++i) {
            tensorgrad_step(w, q.grad(w), st, cfg);
            tensorgrad_step(w2, q.grad(w2), ck.state, ck.config);
        }
        EXPECT_EQ(w, w2) << to_string(order);
        EXPECT_EQ(ck.state.t, st.t);
        EXPECT_EQ(ck.state.refreshes, st.refreshes);
        EXPECT_THROW(load_checkpoint<double>(dir), ValidationError);
    }
}

TEST(ConfigJson, RoundTripAndUnknownKeys) {
    OptimizerConfig c;
    c.lr = 0.125;
    c.order = Composition::lr_us;
    c.ranks = {2, 3};
    c.strategy = SelectStrategy::probk;
    c.precision = Precision::mixed2;
    const auto back = config_from_json(config_to_json(c));
    EXPECT_EQ(config_to_json(back), config_to_json(c));
    EXPECT_THROW(config_from_json(nlohmann::json{{"learning_rate", 1.0}}), ValidationError);
    EXPECT_THROW(config_from_json(nlohmann::json{{"order", "diagonal"}}), ValidationError);
    EXPECT_EQ(config_from_json(nlohmann::json{{"gap", 7}}, c).lr, 0.125);
}

TEST(Checkpoint, MissingDirectory) {
    EXPECT_THROW(load_checkpoint<double>("/nonexistent/tgrad_ckpt"), ValidationError);
}
