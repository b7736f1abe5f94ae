// earpipe: command-line front end for the ear-accessory inpainting pipeline.

#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "earpipe/manifest.hpp"
#include "earpipe/mock_backends.hpp"
#include "earpipe/pipeline.hpp"

namespace fs = std::filesystem;
using namespace earpipe;

namespace {

struct StageArgs {
    std::string config;
    std::string manifest;
    std::string condition;
    std::string out;
};

PipelineConfig config_from(const std::string& file) {
    PipelineConfig c = file.empty() ? PipelineConfig{} : load_config(file);
    c.check();
    return c;
}

std::optional<InputCondition> condition_from(const std::string& s) {
    if (s.empty()) return std::nullopt;
    return input_condition_from_string(s);
}

RunOptions options_from(const StageArgs& a, bool quiet) {
    RunOptions o;
    o.out_dir = a.out;
    o.condition = condition_from(a.condition);
    if (!quiet) o.log = [](const std::string& line) { std::cerr << line << '\n'; };
    return o;
}

void add_stage_options(CLI::App* cmd, StageArgs& a, bool manifest_required) {
    cmd->add_option("--config", a.config, "Pipeline config (JSON); defaults apply when omitted");
    auto* m = cmd->add_option("--manifest", a.manifest, "Dataset manifest (JSON)");
    if (manifest_required) m->required();
    cmd->add_option("--condition", a.condition, "baseline | inpainted")
        ->check(CLI::IsMember({"baseline", "inpainted"}));
    cmd->add_option("--out", a.out, "Output directory")->required();
}

void print_stats(const RunStats& stats) {
    for (const auto& [stage, n] : stats.executed) {
        const auto it = stats.cached.find(stage);
        std::cerr << "  " << stage << ": " << n << " computed, "
                  << (it == stats.cached.end() ? 0 : it->second) << " cached\n";
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Ear-accessory inpainting pipeline"};
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "No progress output");

    std::string root, layout = "subject_folders", name, ingest_out;
    auto* ingest = app.add_subcommand("ingest", "Build a manifest from a dataset directory");
    ingest->add_option("--root", root, "Dataset root")->required();
    ingest->add_option("--layout", layout, "subject_folders | flat_with_index")
        ->check(CLI::IsMember({"subject_folders", "flat_with_index"}));
    ingest->add_option("--name", name, "Dataset name (default: root folder name)");
    ingest->add_option("--out", ingest_out, "Output directory; manifest.json is written there")->required();

    int identities = 4, images = 5;
    double rate = 0.5;
    std::uint64_t seed = 7;
    std::string synth_out;
    auto* synth = app.add_subcommand("synth", "Write a synthetic ear dataset");
    synth->add_option("--identities", identities)->check(CLI::PositiveNumber);
    synth->add_option("--images", images, "Images per identity")->check(CLI::PositiveNumber);
    synth->add_option("--rate", rate, "Occlusion rate")->check(CLI::Range(0.0, 1.0));
    synth->add_option("--seed", seed);
    synth->add_option("--out", synth_out)->required();

    StageArgs args;
    std::vector<std::pair<CLI::App*, StageName>> stage_cmds;
    for (auto stage : {StageName::align, StageName::detect, StageName::mask, StageName::inpaint,
                       StageName::embed, StageName::evaluate, StageName::report}) {
        auto* cmd = app.add_subcommand(std::string(to_string(stage)), "Run the " + std::string(to_string(stage)) + " stage");
        add_stage_options(cmd, args, stage != StageName::report);
        stage_cmds.emplace_back(cmd, stage);
    }
    auto* run = app.add_subcommand("run", "Run every configured stage");
    add_stage_options(run, args, true);

    std::string baseline_results, inpainted_results, compare_out;
    auto* compare = app.add_subcommand("compare", "Build the comparison report from two results files");
    compare->add_option("--baseline", baseline_results)->required();
    compare->add_option("--inpainted", inpainted_results)->required();
    compare->add_option("--out", compare_out)->required();

    CLI11_PARSE(app, argc, argv);

    std::string where = "earpipe";
    try {
        if (ingest->parsed()) {
            where = "ingest";
            auto report = ingest_dataset(root, dataset_layout_from_string(layout), name);
            for (const auto& w : report.warnings) std::cerr << "[ingest] warning: " << w << '\n';
            const fs::path file = fs::path(ingest_out) / "manifest.json";
            save_manifest(report.manifest, file);
            std::cout << file.string() << '\n';
            return 0;
        }
        if (synth->parsed()) {
            where = "synth";
            auto ds = synth_dataset(synth_out, identities, images, rate, seed);
            std::cout << ds.manifest_file.string() << '\n';
            return 0;
        }
        if (compare->parsed()) {
            where = "report";
            write_report(compare_conditions(baseline_results, inpainted_results), compare_out);
            std::cout << (fs::path(compare_out) / "report.txt").string() << '\n';
            return 0;
        }
        if (run->parsed()) {
            where = "run";
            const PipelineConfig config = config_from(args.config);
            const DatasetManifest manifest = load_manifest(args.manifest);
            const RunSummary summary = run_pipeline(config, manifest, options_from(args, quiet));
            if (!quiet) print_stats(summary.stats);
            if (summary.report_dir) std::cout << (*summary.report_dir / "report.txt").string() << '\n';
            return 0;
        }
        for (auto& [cmd, stage] : stage_cmds) {
            if (!cmd->parsed()) continue;
            where = std::string(to_string(stage));
            const PipelineConfig config = config_from(args.config);
            const bool restoration = stage == StageName::detect || stage == StageName::mask ||
                                     stage == StageName::inpaint;
            const InputCondition condition = condition_from(args.condition).value_or(
                restoration ? InputCondition::inpainted : InputCondition::baseline);
            DatasetManifest manifest;
            if (!args.manifest.empty()) manifest = load_manifest(args.manifest);
            RunStats stats;
            const DatasetManifest out = run_stage(stage, config, manifest, condition, options_from(args, quiet), &stats);
            if (stage != StageName::embed && stage != StageName::evaluate && stage != StageName::report) {
                std::cout << (fs::path(args.out) / "manifests" / std::string(to_string(condition)) /
                              (where + ".json")).string()
                          << '\n';
            }
            return 0;
        }
    } catch (const Error& e) {
        std::cerr << "earpipe: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "earpipe: [" << where << "] " << e.what() << '\n';
        return 1;
    }
    return 0;
}
