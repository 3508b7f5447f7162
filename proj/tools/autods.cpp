// Command-line front end: run, ablate, validate-config, propose-only, report-only.
#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "autods/pipeline.hpp"
#include "autods/report.hpp"

namespace fs = std::filesystem;
using namespace autods;
using nlohmann::json;

namespace {

std::string read_file(const fs::path& p, ErrorKind kind) {
    std::ifstream in(p, std::ios::binary);
    if (!in) fail(kind, "cannot read " + p.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) fail(ErrorKind::stage, "cannot write " + p.string());
    out << text;
}

pipeline::PipelineConfig config_at(const std::string& path, const std::string& out) {
    auto c = pipeline::load_config(path);
    if (!out.empty()) c.output_dir = out;
    return c;
}

void summary(const pipeline::RunResult& r, const fs::path& dir) {
    std::printf("hypotheses: %zu tested", r.verdicts.size());
    std::size_t accepted = 0;
    for (const auto& v : r.verdicts) accepted += v.accepted;
    std::printf(", %zu accepted\n", accepted);
    std::printf("features kept: %zu\n", r.features.kept.size());
    std::printf("model: %s, holdout %s = %.4f\n", r.model.chosen_label.c_str(), model::primary_metric(r.model.design.task),
                r.model.holdout.get(model::primary_metric(r.model.design.task)));
    if (!r.exchanges.empty()) std::printf("llm cost: %.6f over %zu calls\n", r.total_cost, r.exchanges.size());
    for (const auto& t : r.timings) std::printf("  %-18s %8.3f s\n", t.stage.c_str(), t.seconds);
    std::printf("total %.3f s, outputs in %s\n", r.wall_seconds, dir.string().c_str());
    for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

int cmd_run(const std::string& config, const std::string& out) {
    const auto c = config_at(config, out);
    try {
        const auto r = pipeline::run(c);
        pipeline::write_outputs(r, c.output_dir);
        pipeline::AblationRow row;
        row.toggles = {c.name, c.hypothesis, c.feature_engineering};
        row.ok = true;
        row.holdout = r.model.holdout.values();
        row.feature_count = r.model.design.features.size();
        row.seconds = r.wall_seconds;
        write_file(c.output_dir / "ablation.csv", pipeline::ablation_csv({row}));
        summary(r, c.output_dir);
        if (r.budget_exhausted) {
            std::fprintf(stderr, "error: LLM budget exhausted\n");
            return 5;
        }
        return 0;
    } catch (const pipeline::StageFailure& f) {
        std::error_code ec;
        fs::create_directories(c.output_dir, ec);
        write_file(c.output_dir / "ledger.json", f.ledger().dump() + "\n");
        throw;
    }
}

int cmd_ablate(const std::string& config, const std::string& grid_path, const std::string& out) {
    const auto c = config_at(config, out);
    json grid;
    try {
        grid = json::parse(read_file(grid_path, ErrorKind::config));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::config, "grid " + grid_path + " is not valid JSON: " + e.what());
    }
    const auto toggles = pipeline::grid_from_json(grid);
    std::vector<pipeline::RunResult> runs;
    const auto rows = pipeline::ablate(c, toggles, &runs);
    fs::create_directories(c.output_dir);
    std::size_t k = 0;
    for (const auto& row : rows)
        if (row.ok) pipeline::write_outputs(runs[k++], c.output_dir / row.toggles.name);
    write_file(c.output_dir / "ablation.csv", pipeline::ablation_csv(rows));
    const std::string md = pipeline::ablation_markdown(rows);
    write_file(c.output_dir / "ablation.md", md);
    std::fputs(md.c_str(), stdout);
    for (const auto& row : rows)
        if (!row.ok) {
            std::fprintf(stderr, "error: configuration %s failed: %s\n", row.toggles.name.c_str(), row.error.c_str());
            return 4;
        }
    return 0;
}

int cmd_validate(const std::string& config) {
    const auto c = pipeline::load_config(config);
    DataTable data;
    try {
        data = load_csv(c.input);
    } catch (const Error& e) {
        fail(ErrorKind::data, e.what());
    }
    pipeline::validate_against_data(c, data);
    std::printf("config ok: %zu rows, %zu columns, target %s\n", data.n_rows(), data.n_cols(), c.target.c_str());
    return 0;
}

int cmd_propose(const std::string& config, const std::string& out) {
    const auto c = config_at(config, out);
    std::vector<std::string> warnings;
    const auto p = pipeline::propose_only(c, &warnings);
    fs::create_directories(c.output_dir);
    json docs = json::array();
    for (const auto& d : p.docs) docs.push_back(hypothesis::to_json(d));
    json doc = {{"hypotheses", docs}, {"total_cost", p.total_cost}, {"total_tokens", p.total_tokens}, {"budget_exhausted", p.budget_exhausted}};
    write_file(c.output_dir / "hypotheses.json", doc.dump(2) + "\n");
    write_file(c.output_dir / "exchanges.jsonl", proposer::to_jsonl(p.exchanges));
    for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    std::printf("%zu hypotheses written to %s\n", p.docs.size(), (c.output_dir / "hypotheses.json").string().c_str());
    if (p.budget_exhausted) {
        std::fprintf(stderr, "error: LLM budget exhausted\n");
        return 5;
    }
    return 0;
}

int cmd_report(const std::string& config, const std::string& dir_opt) {
    fs::path dir = dir_opt;
    if (dir.empty()) dir = pipeline::load_config(config).output_dir;
    json report;
    try {
        report = json::parse(read_file(dir / "report.json", ErrorKind::data));
    } catch (const json::parse_error& e) {
        fail(ErrorKind::data, "report.json is not valid JSON: " + std::string(e.what()));
    }
    write_file(dir / "report.md", report::render_markdown(report));
    std::printf("report.md rendered in %s\n", dir.string().c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"autods: hypothesis-driven tabular data science pipeline"};
    app.require_subcommand(1);
    std::string config, grid, out, dir;

    auto* run = app.add_subcommand("run", "Run the full pipeline");
    run->add_option("--config", config, "pipeline config (JSON)")->required();
    run->add_option("--out", out, "output directory, overriding the config");

    auto* ablate = app.add_subcommand("ablate", "Run several stage toggle sets and compare them");
    ablate->add_option("--config", config, "pipeline config (JSON)")->required();
    ablate->add_option("--grid", grid, "toggle sets (JSON)")->required();
    ablate->add_option("--out", out, "output directory, overriding the config");

    auto* validate = app.add_subcommand("validate-config", "Check a config against its data");
    validate->add_option("--config", config, "pipeline config (JSON)")->required();

    auto* propose = app.add_subcommand("propose-only", "Propose hypotheses on the training rows");
    propose->add_option("--config", config, "pipeline config (JSON)")->required();
    propose->add_option("--out", out, "output directory, overriding the config");

    auto* report = app.add_subcommand("report-only", "Re-render report.md from report.json");
    auto* rc = report->add_option("--config", config, "pipeline config (JSON) naming the output directory");
    report->add_option("--dir", dir, "output directory holding report.json")->excludes(rc);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*run) return cmd_run(config, out);
        if (*ablate) return cmd_ablate(config, grid, out);
        if (*validate) return cmd_validate(config);
        if (*propose) return cmd_propose(config, out);
        if (*report) {
            if (config.empty() && dir.empty()) fail(ErrorKind::config, "report-only needs --config or --dir");
            return cmd_report(config, dir);
        }
    } catch (const pipeline::StageFailure& f) {
        std::fprintf(stderr, "error: stage %s failed (%s): %s\n", f.stage().c_str(), to_string(f.kind()), f.what());
        return pipeline::exit_code(f.kind());
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        for (const auto& i : e.issues()) std::fprintf(stderr, "  %s\n", i.c_str());
        return pipeline::exit_code(e.kind());
    } catch (const Error& e) {
        std::fprintf(stderr, "error (%s): %s\n", to_string(e.kind()), e.what());
        return pipeline::exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 4;
    }
    return 0;
}
