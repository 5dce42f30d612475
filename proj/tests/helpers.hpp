#pragma once

#include "failband/rng.hpp"
#include "failband/types.hpp"

#include <cstdio>
#include <filesystem>
#include <string>

namespace failband::test {

/// Random but structurally valid dataset for round-trip and plumbing tests.
inline Dataset make_dataset(int n_rollouts, int n_steps, int d_obs = 4, int d_action = 2,
                            int horizon = 4, int exec_horizon = 2, uint64_t seed = 1) {
    Dataset ds;
    ds.header.d_obs = d_obs;
    ds.header.d_action = d_action;
    ds.header.horizon = horizon;
    ds.header.exec_horizon = exec_horizon;
    ds.header.obs_window = 1;
    Rng rng(seed);
    for (int r = 0; r < n_rollouts; ++r) {
        Rollout rollout;
        rollout.id = "r" + std::to_string(r);
        rollout.label = r % 2 == 0 ? Label::Success : Label::Failure;
        if (rollout.label == Label::Failure) {
            rollout.failure_mode = FailureMode::Slip;
            rollout.injection_time = 0;
        }
        for (int k = 0; k < n_steps; ++k) {
            Step s;
            s.t = k * exec_horizon;
            for (int i = 0; i < d_obs; ++i) s.obs.push_back(rng.gaussian());
            for (int h = 0; h < horizon; ++h) {
                Vec row;
                for (int i = 0; i < d_action; ++i) row.push_back(rng.uniform(-1.0, 1.0));
                s.action_chunk.push_back(std::move(row));
            }
            rollout.steps.push_back(std::move(s));
        }
        ds.rollouts.push_back(std::move(rollout));
    }
    return ds;
}

/// Unique scratch directory per test, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        path_ = std::filesystem::temp_directory_path() /
                ("failband_test_" + tag + "_" + std::to_string(counter()++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    std::string file(const std::string& name) const { return (path_ / name).string(); }
    const std::filesystem::path& path() const { return path_; }

private:
    static int& counter() {
        static int c = 0;
        return c;
    }
    std::filesystem::path path_;
};

} // namespace failband::test
