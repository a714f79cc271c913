#include <kpz/cli.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>

int main(int argc, char** argv)
{
    CLI::App app{"Exclusion-process KPZ experiment runner"};
    app.set_version_flag("--version", kpz::kVersion);
    app.require_subcommand(1);

    auto* run = app.add_subcommand("run", "run the experiment described by a config file");
    std::string config_path;
    std::optional<std::string> out_dir;
    std::optional<std::uint64_t> seed;
    run->add_option("config", config_path, "experiment config (YAML or JSON)")->required();
    run->add_option("--out", out_dir, "output directory, overrides output.dir");
    run->add_option("--seed", seed, "seed, overrides the config");

    CLI11_PARSE(app, argc, argv);

    try {
        kpz::ExperimentConfig cfg = kpz::load_config(config_path);
        if (out_dir)
            cfg.output.dir = *out_dir;
        if (seed)
            cfg.seed = *seed;
        kpz::ReportBundle bundle = kpz::run_experiment(cfg);
        kpz::write_report(bundle, cfg.output.dir, cfg.stem());
        std::cout << bundle.summary.dump() << "\n";
    } catch (const kpz::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
