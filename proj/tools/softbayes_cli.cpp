// softbayes: run experiments, generate streams, evaluate bounds and run the
// numerical verification suites.
//
// Exit codes: 0 success, 1 a bound or verification check failed,
// 2 configuration or ingestion error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "softbayes/softbayes.hpp"

namespace sb = softbayes;

namespace {

constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;

struct RunFlags {
    std::string config_path;
    std::string stream;
    std::string generator;
    std::vector<std::string> learners;
    std::string comparator;
    std::vector<std::string> bounds;
    std::uint64_t seed = 0;
    std::string out_csv;
    std::string out_json;
    std::string on_divergence;
    bool bits = false;
};

void add_run_flags(CLI::App* cmd, RunFlags& f) {
    cmd->add_option("--config", f.config_path, "JSON experiment config; flags override its fields")
        ->check(CLI::ExistingFile);
    cmd->add_option("--stream", f.stream, "stream file (.jsonl or .csv)");
    cmd->add_option("--generator", f.generator, "generator spec, e.g. theorem2:T=100");
    cmd->add_option("--learner", f.learners, "learner spec, repeatable, e.g. soft-bayes:anytime");
    cmd->add_option("--comparator", f.comparator, "fixed-mixture | single-best | shifting=t2,t3,...");
    cmd->add_option("--bound", f.bounds, "bound variant to check, repeatable");
    cmd->add_option("--seed", f.seed, "generator seed");
    cmd->add_option("--out-csv", f.out_csv, "per-round trace");
    cmd->add_option("--out-json", f.out_json, "summary");
    cmd->add_option("--on-divergence", f.on_divergence, "halt | continue")->check(CLI::IsMember({"halt", "continue"}));
    cmd->add_flag("--bits", f.bits, "report losses in bits");
}

sb::ExperimentConfig build_config(const RunFlags& f, const CLI::App* cmd) {
    sb::ExperimentConfig c;
    if (!f.config_path.empty()) {
        std::ifstream in(f.config_path);
        c = sb::ExperimentConfig::from_json(nlohmann::json::parse(in));
    }
    if (!f.stream.empty()) {
        c.stream_path = f.stream;
        c.generator.reset();
    }
    if (!f.generator.empty()) {
        c.generator = f.generator;
        if (f.stream.empty()) c.stream_path.reset();
    }
    if (!f.learners.empty()) c.learners = f.learners;
    if (!f.comparator.empty()) c.comparator = f.comparator;
    if (!f.bounds.empty()) c.bounds = f.bounds;
    if (cmd->count("--seed")) c.seed = f.seed;
    if (!f.out_csv.empty()) c.out_csv = f.out_csv;
    if (!f.out_json.empty()) c.out_json = f.out_json;
    if (!f.on_divergence.empty()) c.on_divergence = sb::parse_divergence_policy(f.on_divergence);
    if (f.bits) c.bits = true;
    c.validate();
    return c;
}

std::string cell(const nlohmann::ordered_json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_number()) {
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.6f", v.get<double>());
        return buf;
    }
    if (v.is_boolean()) return v.get<bool>() ? "yes" : "no";
    return "-";
}

void print_table(const sb::RunArtifact& art) {
    const auto& s = art.summary;
    std::printf("stream: N=%s T=%s  comparator %s loss %s %s\n", s["stream"]["experts"].dump().c_str(),
                s["stream"]["rounds"].dump().c_str(), s["comparator"]["kind"].get<std::string>().c_str(),
                cell(s["comparator"]["loss"]).c_str(), s["units"].get<std::string>().c_str());
    std::printf("%-32s %16s %16s %9s  %s\n", "learner", "loss", "regret", "diverged", "bounds");
    for (const auto& l : s["learners"]) {
        std::string bounds;
        for (const auto& b : l["bounds"]) {
            const std::string mark = b["satisfied"].is_null() ? "n/a" : (b["satisfied"].get<bool>() ? "ok" : "FAIL");
            bounds += b["variant"].get<std::string>() + "=" + cell(b["value"]) + "(" + mark + ") ";
        }
        std::printf("%-32s %16s %16s %9s  %s\n", l["name"].get<std::string>().c_str(), cell(l["learner_loss"]).c_str(),
                    cell(l["regret"]).c_str(), l["diverged"].get<bool>() ? "yes" : "no", bounds.c_str());
    }
}

int cmd_run(const RunFlags& f, const CLI::App* cmd, bool table) {
    const sb::ExperimentConfig config = build_config(f, cmd);
    const sb::RunArtifact art = sb::run_experiment(config);
    sb::write_artifact(art, config);
    if (table)
        print_table(art);
    else if (!config.out_json)
        std::cout << art.json_text();
    return art.bounds_ok ? 0 : kExitCheckFailed;
}

struct GenFlags {
    std::string generator;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_gen(const GenFlags& f) {
    const sb::ExpertStream stream = sb::generate(sb::parse_generator(f.generator, f.seed));
    if (f.out.empty() || f.out == "-") {
        sb::write_stream_jsonl(std::cout, stream);
        return 0;
    }
    std::ofstream out(f.out, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + f.out);
    if (sb::is_csv_path(f.out))
        sb::write_stream_csv(out, stream);
    else
        sb::write_stream_jsonl(out, stream);
    return 0;
}

struct BoundFlags {
    std::vector<std::string> variants;
    double T = 0, N = 0, m = 0, K = 0, eta = 0, eta_bar = 0, C1 = 0, C2 = 0, quad_sum = 0, prior_entry = 0;
};

int cmd_bound(const BoundFlags& f, const CLI::App* cmd) {
    sb::BoundParams p;
    auto opt = [cmd](const char* flag, double v) { return cmd->count(flag) ? std::optional<double>(v) : std::nullopt; };
    p.T = opt("--T", f.T);
    p.N = opt("--N", f.N);
    p.m = opt("--m", f.m);
    p.K = opt("--K", f.K);
    p.eta = opt("--eta", f.eta);
    p.eta_bar = opt("--eta-bar", f.eta_bar);
    p.C1 = opt("--C1", f.C1);
    p.C2 = opt("--C2", f.C2);
    p.quad_sum = opt("--quad-sum", f.quad_sum);
    p.prior_entry = opt("--prior-entry", f.prior_entry);
    std::vector<sb::BoundVariant> variants;
    if (f.variants.empty())
        variants = sb::all_bound_variants();
    else
        for (const auto& v : f.variants) variants.push_back(sb::parse_bound_variant(v));
    int status = 0;
    for (auto v : variants) {
        try {
            std::printf("%-16s %.10g\n", sb::to_string(v).c_str(), sb::theoretical_bound(v, p));
        } catch (const sb::MissingBoundParameter& e) {
            std::printf("%-16s n/a (%s)\n", sb::to_string(v).c_str(), e.what());
            if (!f.variants.empty()) status = kExitConfigError;
        }
    }
    return status;
}

int cmd_verify(const sb::VerifyOptions& opt) {
    bool ok = true;
    for (const auto& r : sb::verify_all(opt)) {
        std::printf("%s  %-64s samples=%zu failures=%zu worst=%.3g\n", r.passed() ? "PASS" : "FAIL", r.name.c_str(),
                    r.samples, r.failures, r.worst);
        ok = ok && r.passed();
    }
    return ok ? 0 : kExitCheckFailed;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Soft-Bayes experiments with expert advice under log-loss"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "run learners over a stream and write trace and summary");
    add_run_flags(run, run_flags);

    RunFlags cmp_flags;
    auto* compare = app.add_subcommand("compare", "run learners and print a comparison table");
    add_run_flags(compare, cmp_flags);

    GenFlags gen_flags;
    auto* gen = app.add_subcommand("gen", "write a generated stream");
    gen->add_option("--generator", gen_flags.generator, "generator spec")->required();
    gen->add_option("--seed", gen_flags.seed, "seed");
    gen->add_option("--out", gen_flags.out, "output path (.jsonl or .csv); stdout when omitted");

    BoundFlags bound_flags;
    auto* bound = app.add_subcommand("bound", "evaluate closed-form regret bounds");
    bound->add_option("--variant,--bound", bound_flags.variants, "bound variant, repeatable; all when omitted");
    bound->add_option("--T", bound_flags.T);
    bound->add_option("--N", bound_flags.N);
    bound->add_option("--m", bound_flags.m);
    bound->add_option("--K", bound_flags.K);
    bound->add_option("--eta", bound_flags.eta);
    bound->add_option("--eta-bar", bound_flags.eta_bar);
    bound->add_option("--C1", bound_flags.C1);
    bound->add_option("--C2", bound_flags.C2);
    bound->add_option("--quad-sum", bound_flags.quad_sum);
    bound->add_option("--prior-entry", bound_flags.prior_entry);

    sb::VerifyOptions verify_opt;
    auto* verify = app.add_subcommand("verify", "run the inequality, equivalence and invariant suites");
    verify->add_option("--samples", verify_opt.lemma_samples, "random samples per inequality");
    verify->add_option("--runs", verify_opt.runs, "seeded runs per schedule");
    verify->add_option("--T", verify_opt.T, "rounds per run");
    verify->add_option("--seed", verify_opt.seed, "seed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run) return cmd_run(run_flags, run, false);
        if (*compare) return cmd_run(cmp_flags, compare, true);
        if (*gen) return cmd_gen(gen_flags);
        if (*bound) return cmd_bound(bound_flags, bound);
        if (*verify) return cmd_verify(verify_opt);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfigError;
    }
    return 0;
}
