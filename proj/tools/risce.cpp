// SPDX-License-Identifier: Apache-2.0
//
// Command line front end covering the whole experiment cycle: dataset
// synthesis, denoiser training, estimator evaluation, the skip-connection
// ablation, residual-grid visualization, a gradient audit, and a quick
// self test of the basic building blocks.

#include <cmath>
#include <complex>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "risce/harness.hpp"

namespace {

using risce::harness::ExperimentConfig;

struct CommonOpts {
    std::string config_path;
    std::string link = "all";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
};

void add_common(CLI::App* cmd, CommonOpts& o) {
    cmd->add_option("--config", o.config_path,
                    "JSON experiment config; omitted means the built-in desk profile")
        ->check(CLI::ExistingFile);
    cmd->add_option("--seed", o.seed, "Master seed override");
    cmd->add_option("--out", o.out_dir, "Output directory override");
    cmd->add_option("--link", o.link, "Which link to act on")
        ->check(CLI::IsMember({"1", "2", "3", "all"}));
}

ExperimentConfig make_config(const CommonOpts& o) {
    ExperimentConfig cfg;
    if (!o.config_path.empty()) cfg = risce::harness::load_config(o.config_path);
    if (o.seed) cfg.master_seed = *o.seed;
    if (o.out_dir) cfg.out_dir = *o.out_dir;
    cfg.validate();
    return cfg;
}

std::vector<int> selected_links(const std::string& s) {
    if (s == "all") return {1, 2, 3};
    return {s[0] - '0'};
}

int cmd_generate(const CommonOpts& o) {
    const ExperimentConfig cfg = make_config(o);
    for (const int link : selected_links(o.link)) {
        const risce::data::Dataset ds = risce::harness::generate_dataset(cfg, link);
        std::cout << "wrote " << risce::harness::dataset_path(cfg, link) << " ("
                  << ds.samples.size() << " samples, " << ds.rows << "x" << ds.cols
                  << ", scale " << ds.scale << ")\n";
    }
    return 0;
}

int cmd_train(const CommonOpts& o, const std::string& skip,
              const std::optional<std::size_t>& blocks) {
    const ExperimentConfig cfg = make_config(o);
    const bool skip_on = skip == "on";
    for (const int link : selected_links(o.link)) {
        const risce::data::Dataset ds = risce::harness::ensure_dataset(cfg, link);
        risce::net::NetConfig ncfg = risce::harness::link_net_config(cfg, link);
        ncfg.skip_connection = skip_on;
        if (blocks) ncfg.blocks = *blocks;
        const std::string name = risce::harness::artifact_name(link, skip_on, blocks);
        const risce::harness::TrainedLink trained =
            risce::harness::train_link(cfg, link, ds, ncfg, name);
        std::cout << "trained " << name << ": best val NMSE " << trained.result.best_val
                  << " at epoch " << trained.result.best_epoch + 1 << "\n"
                  << "  checkpoint " << trained.checkpoint_file << "\n"
                  << "  history    " << trained.history_file << "\n";
    }
    return 0;
}

int cmd_evaluate(const CommonOpts& o) {
    const ExperimentConfig cfg = make_config(o);
    const auto rows = risce::harness::run_evaluation(cfg, selected_links(o.link));
    for (const auto& r : rows)
        std::cout << "link " << r.link_id << "  " << std::setw(5) << r.snr_db << " dB  "
                  << std::setw(20) << std::left << r.estimator << std::right << "  NMSE "
                  << r.nmse << " (" << r.nmse_db << " dB)\n";
    std::cout << "wrote " << cfg.out_dir << "/results.csv (" << rows.size() << " rows)\n";
    return 0;
}

int cmd_ablate(const CommonOpts& o) {
    const ExperimentConfig cfg = make_config(o);
    for (const int link : selected_links(o.link)) {
        const risce::harness::AblationReport rep = risce::harness::run_ablation(cfg, link);
        std::cout << "link " << link << " batch orders "
                  << (rep.digests_match ? "matched" : "DIVERGED") << "\n";
        for (const auto& row : rep.rows) {
            std::cout << "  " << std::setw(5) << row.snr_db << " dB: skip-off "
                      << row.nmse_skip_off << "  skip-on " << row.nmse_skip_on
                      << "  improvement " << 100.0 * row.improvement << "%";
            if (!std::isnan(row.reference_skip_off))
                std::cout << "  [reference off " << row.reference_skip_off << ", on "
                          << row.reference_skip_on << "]";
            std::cout << "\n";
        }
        std::cout << "wrote " << rep.csv_file << "\n";
    }
    return 0;
}

int cmd_visualize(const CommonOpts& o) {
    const ExperimentConfig cfg = make_config(o);
    const std::vector<std::size_t> counts = {0, 2, 4, 8};
    for (const int link : selected_links(o.link)) {
        const risce::data::Dataset ds = risce::harness::ensure_dataset(cfg, link);
        for (const std::size_t b : counts) {
            if (b == 0) continue;
            const std::string name = risce::harness::artifact_name(link, true, b);
            if (std::filesystem::exists(risce::harness::checkpoint_path(cfg, name))) continue;
            std::cout << "training " << name << " (no checkpoint yet)\n";
            risce::net::NetConfig ncfg = risce::harness::link_net_config(cfg, link);
            ncfg.skip_connection = true;
            ncfg.blocks = b;
            risce::harness::train_link(cfg, link, ds, ncfg, name);
        }
        const risce::harness::VisualizationReport rep =
            risce::harness::visualize_blocks(cfg, link, counts);
        std::cout << "link " << link << " sample " << rep.sample_index << " at " << rep.snr_db
                  << " dB\n";
        for (const auto& p : rep.panels)
            std::cout << "  " << std::setw(3) << p.label << ": mean residual "
                      << p.mean_residual << " -> " << p.csv_file << "\n";
    }
    return 0;
}

int cmd_gradcheck() {
    const auto entries = risce::harness::gradcheck_battery();
    bool all_ok = true;
    for (const auto& e : entries) {
        const bool ok = e.max_rel_err < 1e-4;
        all_ok = all_ok && ok;
        std::cout << std::left << std::setw(24) << e.name << std::right << "  "
                  << std::scientific << std::setprecision(3) << e.max_rel_err
                  << (ok ? "" : "  FAIL") << "\n";
    }
    if (!all_ok) {
        std::cerr << "gradcheck: at least one gradient misses the 1e-4 tolerance\n";
        return 1;
    }
    return 0;
}

int cmd_selftest() {
    using risce::num::ComplexMatrix;
    const auto expect = [](bool cond, const std::string& what) {
        if (!cond) throw std::runtime_error("selftest: " + what);
        std::cout << "ok " << what << "\n";
    };

    // Two-slot DFT schedule: rows orthogonal, Phi * Phi^H = I (slot count).
    {
        const auto sched = risce::pilot::build_single_schedule(1, 2, 2);
        const auto gram =
            risce::num::matmul(sched.phi(), risce::num::conj_transpose(sched.phi()));
        expect(std::abs(gram(0, 0) - 2.0) < 1e-12 && std::abs(gram(1, 1) - 2.0) < 1e-12 &&
                   std::abs(gram(0, 1)) < 1e-12 && std::abs(gram(1, 0)) < 1e-12,
               "dft schedule orthogonality");
    }

    // Noiseless pilots invert exactly under least squares.
    {
        risce::RngStream rng(11, 0);
        ComplexMatrix h(3, 2);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                const auto [re, im] = rng.next_gaussian_pair();
                h(i, j) = {re, im};
            }
        const auto sched = risce::pilot::build_single_schedule(1, 2, 4);
        risce::RngStream noise(12, 0);
        const ComplexMatrix y = risce::pilot::synthesize_single_rx(h, sched, 0.0, noise);
        const ComplexMatrix hat = risce::est::ls_single(y, sched.phi());
        double worst = 0.0;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 2; ++j)
                worst = std::max(worst, std::abs(hat(i, j) - h(i, j)));
        expect(worst < 1e-10, "noiseless least-squares recovery");
    }

    // Complex packing round trip at the stored 32-bit precision.
    {
        risce::RngStream rng(13, 0);
        ComplexMatrix h(3, 2);
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 2; ++j) {
                const auto [re, im] = rng.next_gaussian_pair();
                h(i, j) = {re, im};
            }
        const risce::nn::Tensor<float> t0 = risce::net::pack_complex<float>(h);
        const ComplexMatrix mid = risce::net::unpack_complex(t0);
        const risce::nn::Tensor<float> t1 = risce::net::pack_complex<float>(mid);
        expect(mid.rows() == 3 && mid.cols() == 2 && t0.v == t1.v,
               "complex packing round trip");
    }

    // NMSE endpoints: perfect estimate scores 0, all-zeros estimate scores 1.
    {
        ComplexMatrix h(2, 2);
        h(0, 0) = {1.0, -2.0};
        h(1, 1) = {0.5, 3.0};
        const ComplexMatrix zero(2, 2);
        expect(risce::est::nmse({h}, {h}) == 0.0 && risce::est::nmse({zero}, {h}) == 1.0,
               "nmse endpoints");
    }

    // Checkpoint round trip through a stream restores every weight bitwise.
    {
        risce::net::NetConfig ncfg;
        ncfg.rows = 4;
        ncfg.cols = 3;
        ncfg.channels = 3;
        ncfg.blocks = 1;
        ncfg.post_concat_channels = 3;
        const auto saved = risce::net::make_net_params<float>(ncfg, risce::RngStream(14, 0));
        std::stringstream buf;
        risce::nn::save_checkpoint(buf, saved.params);
        auto loaded = risce::net::make_net_params<float>(ncfg, risce::RngStream(15, 0));
        risce::nn::load_checkpoint(buf, loaded.params);
        bool same = true;
        for (std::size_t p = 0; p < saved.params.size(); ++p)
            same = same && saved.params[p].value.v == loaded.params[p].value.v;
        expect(same, "checkpoint round trip");
    }

    // Dataset round trip through a stream restores the one stored sample.
    {
        risce::data::Dataset ds;
        ds.link_id = 3;
        ds.rows = 2;
        ds.cols = 2;
        ds.scale = 1.25;
        risce::data::SampleRecord rec;
        rec.snr_db = 5.0f;
        rec.noisy = risce::nn::Tensor<float>({2, 2, 2});
        rec.clean = risce::nn::Tensor<float>({2, 2, 2});
        for (std::size_t i = 0; i < rec.noisy.v.size(); ++i) {
            rec.noisy.v[i] = 0.25f * static_cast<float>(i);
            rec.clean.v[i] = -0.5f * static_cast<float>(i);
        }
        ds.samples.push_back(rec);
        std::stringstream buf;
        risce::data::write_dataset(buf, ds);
        const risce::data::Dataset back = risce::data::read_dataset(buf);
        expect(back.link_id == 3 && back.scale == 1.25 && back.samples.size() == 1 &&
                   back.samples[0].snr_db == 5.0f &&
                   back.samples[0].noisy.v == rec.noisy.v &&
                   back.samples[0].clean.v == rec.clean.v,
               "dataset round trip");
    }

    std::cout << "selftest passed\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Double-RIS cascaded channel estimation laboratory"};
    app.require_subcommand(1);

    CommonOpts gen_o, train_o, eval_o, abl_o, vis_o;
    std::string train_skip = "on";
    std::optional<std::size_t> train_blocks;

    CLI::App* gen = app.add_subcommand("generate", "Synthesize pilot observation datasets");
    add_common(gen, gen_o);
    CLI::App* train =
        app.add_subcommand("train", "Train the attention denoiser for the selected links");
    add_common(train, train_o);
    train->add_option("--skip", train_skip, "Skip connection on or off")
        ->check(CLI::IsMember({"on", "off"}));
    train->add_option("--blocks", train_blocks,
                      "Attention block count override; artifact gains a _b<N> suffix");
    CLI::App* eval = app.add_subcommand(
        "evaluate", "Score every estimator on the holdout split and write results.csv");
    add_common(eval, eval_o);
    CLI::App* abl = app.add_subcommand(
        "ablate", "Train skip-on and skip-off variants with shared seeds and compare");
    add_common(abl, abl_o);
    CLI::App* vis =
        app.add_subcommand("visualize", "Write residual grids for block counts 0/2/4/8");
    add_common(vis, vis_o);
    CLI::App* grad = app.add_subcommand(
        "gradcheck", "Audit every layer gradient against central finite differences");
    CLI::App* self = app.add_subcommand("selftest", "Exercise the basic building blocks");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(gen_o);
        if (train->parsed()) return cmd_train(train_o, train_skip, train_blocks);
        if (eval->parsed()) return cmd_evaluate(eval_o);
        if (abl->parsed()) return cmd_ablate(abl_o);
        if (vis->parsed()) return cmd_visualize(vis_o);
        if (grad->parsed()) return cmd_gradcheck();
        if (self->parsed()) return cmd_selftest();
    } catch (const std::exception& e) {
        std::cerr << "risce: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
