#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include <diffmi/pipeline.hpp>

int main(int argc, char** argv) {
    CLI::App app{"train small denoising diffusion models and mount quantile membership attacks"};
    app.require_subcommand(1);

    std::string config_path;
    std::string workspace_override;
    std::string subset = "all";
    bool force = false;

    const auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration (json)")->required();
        cmd->add_option("--workspace", workspace_override,
                        "workspace directory (overrides paths.workspace)");
        cmd->add_flag("--force", force, "reuse a sole stale upstream artifact");
        return cmd;
    };

    CLI::App* gen = add_common(app.add_subcommand(
        "gen-data", "generate the synthetic dataset and its member/public/holdout split"));
    CLI::App* train = add_common(app.add_subcommand(
        "train-dm", "train the diffusion model on the member set"));
    CLI::App* score = add_common(app.add_subcommand(
        "score", "compute reconstruction scores for the split subsets"));
    score->add_option("--subset", subset, "members|public|holdout|all")
        ->check(CLI::IsMember({"members", "public", "holdout", "all"}));
    CLI::App* attack = add_common(app.add_subcommand(
        "attack", "train the attacker bag and emit per-example decisions"));
    CLI::App* evaluate = add_common(app.add_subcommand(
        "evaluate", "roc/tpr tables, calibration, histograms and plots"));
    CLI::App* ablate = add_common(app.add_subcommand(
        "ablate", "bag-size and capacity sweep plus verdict-variance cdf"));
    CLI::App* bench = add_common(app.add_subcommand(
        "bench-prep", "time scoring and attacker training against the dm budget"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        diffmi::RunConfig config = diffmi::RunConfig::load(config_path);
        if (!workspace_override.empty()) config.paths.workspace = workspace_override;

        if (gen->parsed()) diffmi::cmd_gen_data(config, force);
        if (train->parsed()) diffmi::cmd_train_dm(config, force);
        if (score->parsed()) diffmi::cmd_score(config, force, subset);
        if (attack->parsed()) diffmi::cmd_attack(config, force);
        if (evaluate->parsed()) diffmi::cmd_evaluate(config, force);
        if (ablate->parsed()) diffmi::cmd_ablate(config, force);
        if (bench->parsed()) diffmi::cmd_bench_prep(config, force);
        return 0;
    } catch (const diffmi::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const diffmi::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
