// epicure command-line entry point.

#include <csignal>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "epicure/embedding_view.hpp"
#include "epicure/factors.hpp"
#include "epicure/geometry.hpp"
#include "epicure/graph.hpp"
#include "epicure/ingest.hpp"
#include "epicure/pipeline.hpp"
#include "epicure/probes.hpp"
#include "epicure/service.hpp"
#include "epicure/trainer.hpp"
#include "epicure/walker.hpp"

using namespace epicure;
namespace fs = std::filesystem;

namespace {

fs::path in_dir(const fs::path& p, const char* file) { return fs::is_directory(p) ? p / file : p; }

fs::path embedding_path(const fs::path& model) { return in_dir(model, "embedding.bin"); }

Registry open_registry(const std::string& registry, const std::vector<std::string>& bundles) {
    if (!registry.empty()) return load_registry(registry);
    std::vector<fs::path> dirs(bundles.begin(), bundles.end());
    if (dirs.empty()) fail("invalid_input", "pass --registry <config> or at least one --bundle <dir>");
    return registry_from_dirs(dirs);
}

void print_json(const Json& j) { std::cout << dump_json(j); }

int report_error(const Error& e) {
    std::cerr << "error [" << e.code() << "]: " << e.what() << "\n";
    if (!e.suggestions().empty()) {
        std::cerr << "  did you mean:";
        for (const auto& s : e.suggestions()) std::cerr << " " << s;
        std::cerr << "\n";
    }
    return 1;
}

}  // namespace

int main(int argc, char** argv) {
    log_to_stderr();
    CLI::App app{"epicure: ingredient graph embeddings, geometry and pairing queries"};
    app.require_subcommand(1);
    app.fallthrough();
    bool quiet = false;
    app.add_flag("-q,--quiet", quiet, "Only log errors");
    app.set_version_flag("--version", EPICURE_VERSION);

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Match recipe files against the vocabulary");
    std::string vocab_path, out_path;
    std::vector<std::string> recipe_globs;
    unsigned workers = 1;
    ingest->add_option("--vocab", vocab_path, "Vocabulary CSV")->required();
    ingest->add_option("--recipes", recipe_globs, "Recipe JSONL files or globs")->required();
    ingest->add_option("--out", out_path, "Output directory")->required();
    ingest->add_option("--workers", workers, "Parser threads");

    // graph
    auto* graph = app.add_subcommand("graph", "Build the NPMI and typed-compound graph");
    std::string corpus_path, compounds_path;
    NpmiOptions npmi;
    std::size_t min_compound_degree = 2;
    graph->add_option("--corpus", corpus_path, "corpus.bin or the ingest directory")->required();
    graph->add_option("--vocab", vocab_path, "Vocabulary CSV")->required();
    graph->add_option("--compounds", compounds_path, "Compound CSV")->required();
    graph->add_option("--out", out_path, "Output graph.bin or directory")->required();
    graph->add_option("--min-recipe-count,--min-count", npmi.min_recipe_count, "Minimum recipe frequency");
    graph->add_option("--min-compound-degree", min_compound_degree, "Minimum typed compound degree");

    // walk
    auto* walk = app.add_subcommand("walk", "Generate metapath walks for one variant");
    std::string graph_path, variant = "chem";
    std::size_t walks_per_node = 100, walk_length = 50, ii_repeat = 10;
    std::uint64_t seed = 42;
    walk->add_option("--graph", graph_path, "graph.bin or its directory")->required();
    walk->add_option("--variant", variant, "cooc, core or chem");
    walk->add_option("--out", out_path, "Output directory")->required();
    walk->add_option("--walks-per-node", walks_per_node);
    walk->add_option("--walk-length", walk_length);
    walk->add_option("--ii-repeat", ii_repeat, "Pure I-I templates per round (core only)");
    walk->add_option("--seed", seed);
    walk->add_option("--workers", workers);

    // train
    auto* trainc = app.add_subcommand("train", "Train the skip-gram embedding");
    std::string walks_dir;
    TrainConfig tc;
    trainc->add_option("--walks", walks_dir, "Walk directory")->required();
    trainc->add_option("--out", out_path, "Output directory")->required();
    trainc->add_option("--dim", tc.dim);
    trainc->add_option("--window", tc.window);
    trainc->add_option("--negatives", tc.negatives);
    trainc->add_option("--batch-size", tc.batch_size);
    trainc->add_option("--lr", tc.lr);
    trainc->add_option("--epochs", tc.epochs);
    trainc->add_option("--seed", tc.seed);
    trainc->add_option("--workers", tc.workers);

    // geometry / probes / factors
    std::string model_path;
    auto* geom = app.add_subcommand("geometry", "Isotropy and label-recovery report");
    GeometryOptions gopts;
    geom->add_option("--model", model_path, "Model directory or embedding.bin")->required();
    geom->add_option("--vocab", vocab_path)->required();
    geom->add_option("--out", out_path)->required();
    geom->add_option("--bootstrap-iters", gopts.bootstrap_iters);
    geom->add_option("--seed", gopts.seed);

    auto* probesc = app.add_subcommand("probes", "Cross-validated direction quality");
    ProbeOptions popts;
    probesc->add_option("--model", model_path)->required();
    probesc->add_option("--vocab", vocab_path)->required();
    probesc->add_option("--out", out_path)->required();
    probesc->add_option("--repeats", popts.repeats);
    probesc->add_option("--folds", popts.folds);
    probesc->add_option("--seed", popts.seed);

    auto* factorsc = app.add_subcommand("factors", "ICA factors, GMM modes and the mode atlas");
    AtlasOptions aopts;
    std::string labels_path, model_name;
    factorsc->add_option("--model", model_path)->required();
    factorsc->add_option("--vocab", vocab_path)->required();
    factorsc->add_option("--out", out_path)->required();
    factorsc->add_option("--seeds", aopts.factors.seeds);
    factorsc->add_option("--n-components", aopts.factors.ica.n_components);
    factorsc->add_option("--seed", aopts.factors.seed);
    factorsc->add_option("--labels", labels_path, "CSV source,mode_id,label");
    factorsc->add_option("--name", model_name, "Model name stored in the atlas");

    // bundle
    auto* bundlec = app.add_subcommand("bundle", "Assemble a servable model bundle");
    BundleSpec bspec;
    std::string geometry_path, probes_path;
    bundlec->add_option("--name", bspec.name)->required();
    bundlec->add_option("--vocab", bspec.vocab)->required();
    bundlec->add_option("--embedding", bspec.embedding)->required();
    bundlec->add_option("--atlas", bspec.atlas)->required();
    bundlec->add_option("--geometry", geometry_path);
    bundlec->add_option("--probes", probes_path);
    bundlec->add_option("--out", out_path)->required();

    // query
    auto* query = app.add_subcommand("query", "Run a query against model bundles");
    query->require_subcommand(1);
    std::string registry_path, model, seed_name;
    std::vector<std::string> bundle_dirs;
    std::size_t k = 5;
    auto add_source = [&](CLI::App* c) {
        c->add_option("--registry", registry_path, "Registry config");
        c->add_option("--bundle", bundle_dirs, "Bundle directory (repeatable)");
    };
    auto* qn = query->add_subcommand("neighbors", "Top-k cosine neighbors");
    add_source(qn);
    qn->add_option("--model", model)->required();
    qn->add_option("--seed", seed_name)->required();
    qn->add_option("--k", k);
    auto* qm = query->add_subcommand("mode", "Closest emergent mode");
    bool include_supervised = false;
    add_source(qm);
    qm->add_option("--model", model)->required();
    qm->add_option("--seed", seed_name)->required();
    qm->add_flag("--include-supervised-modes", include_supervised);
    auto* qr = query->add_subcommand("rotate", "SLERP the seed toward a target");
    std::string target_kind = "supervised", pole_style = "diff";
    std::vector<std::string> targets;
    double angle = 0.0;
    add_source(qr);
    qr->add_option("--model", model)->required();
    qr->add_option("--seed", seed_name)->required();
    qr->add_option("--target-kind", target_kind, "supervised, mode or blend");
    qr->add_option("--target", targets, "Label spec (cuisine:South_Asian) or mode (F_0/M1); repeat for blend")->required();
    qr->add_option("--angle", angle, "Degrees in [0, 90]")->required();
    qr->add_option("--k", k);
    qr->add_option("--pole-style", pole_style, "diff or mean");
    auto* qmodes = query->add_subcommand("modes", "List a model's modes");
    add_source(qmodes);
    qmodes->add_option("--model", model)->required();
    auto* qi = query->add_subcommand("ingredients", "Prefix search over ingredient names");
    std::string prefix;
    std::size_t limit = 20;
    add_source(qi);
    qi->add_option("--q", prefix);
    qi->add_option("--model", model);
    qi->add_option("--limit", limit);

    // serve
    auto* serve = app.add_subcommand("serve", "Serve the HTTP JSON API");
    std::string bind;
    serve->add_option("--registry", registry_path)->required();
    serve->add_option("--bind", bind, "host:port (overrides the registry)");

    // run
    auto* run = app.add_subcommand("run", "Run the full pipeline from a config");
    std::string config_path, variants_flag;
    RunOptions ropts;
    run->add_option("--config", config_path)->required();
    run->add_option("--variant", variants_flag, "Comma-separated subset of cooc,core,chem");
    run->add_flag("--strict", ropts.strict, "Abort when an artifact does not match its manifest");
    run->add_flag("--force", ropts.force, "Rerun every stage");

    CLI11_PARSE(app, argc, argv);
    set_log_quiet(quiet);

    try {
        if (*ingest) {
            std::vector<fs::path> files;
            for (const auto& g : recipe_globs) {
                auto f = expand_glob(g);
                if (f.empty()) fail("missing_input", "no files match " + g);
                files.insert(files.end(), f.begin(), f.end());
            }
            const auto vocab = load_vocabulary(vocab_path);
            const auto corpus = load_recipes(files, vocab, workers);
            fs::create_directories(out_path);
            save_corpus(corpus, fs::path(out_path) / "corpus.bin");
            const auto report = ingest_report(corpus, files);
            write_text_file(fs::path(out_path) / "ingest_report.json", dump_json(report));
            print_json(report);
        } else if (*graph) {
            const auto vocab = load_vocabulary(vocab_path);
            const auto cooc = compute_npmi_graph(load_corpus(in_dir(corpus_path, "corpus.bin")), vocab.names(), npmi);
            TypedGraphStats st;
            const auto typed = build_typed_graph(cooc, load_compound_file(compounds_path), min_compound_degree, &st);
            const Json stats{{"n_active", cooc.n_active()},           {"n_ii_edges", cooc.edges.size()},
                             {"n_typed", typed.compounds.size()},     {"n_typed_removed", st.n_typed_removed},
                             {"n_ic_edges", typed.ic_edges.size()},   {"n_hubs", typed.n_hubs()}};
            save_graph(typed, in_dir(out_path, "graph.bin"), stats);
            print_json(stats);
        } else if (*walk) {
            const auto v = parse_variant(variant);
            if (!v) throw Error("invalid_input", "unknown variant '" + variant + "'", {"cooc", "core", "chem"});
            auto schema = WalkSchema::for_variant(*v);
            if (*v == Variant::Core) schema.ii_repeat = ii_repeat;
            schema.walks_per_node = walks_per_node;
            schema.walk_length = walk_length;
            schema.rng_seed = seed;
            const auto corpus = generate_walks(load_graph(in_dir(graph_path, "graph.bin")), schema, workers);
            save_walks(corpus, out_path);
            print_json(corpus.census());
        } else if (*trainc) {
            const auto corpus = load_walks(walks_dir);
            const auto emb = train(corpus, tc);
            fs::create_directories(out_path);
            save_embedding(emb, fs::path(out_path) / "embedding.bin");
            print_json(Json{{"rows", emb.rows()}, {"dim", emb.dim()}, {"epoch_losses", emb.epoch_losses}});
        } else if (*geom || *probesc || *factorsc) {
            const auto vocab = load_vocabulary(vocab_path);
            const auto emb = load_embedding(embedding_path(model_path));
            const auto view = make_ingredient_view(emb, vocab);
            if (*geom) {
                const auto j = geometry_report(view, vocab, gopts).to_json();
                write_text_file(out_path, dump_json(j));
                print_json(j["isotropy"]);
            } else if (*probesc) {
                const auto j = stratified_report(view, vocab, popts).to_json();
                write_text_file(out_path, dump_json(j));
                print_json(j["strata"]);
            } else {
                auto atlas = build_atlas(view, vocab, aopts, model_name.empty() ? emb.variant : model_name);
                if (!labels_path.empty()) apply_labels(atlas, labels_path);
                save_atlas(atlas, out_path);
                print_json(Json{{"modes", atlas.modes.size()}, {"baseline", atlas.baseline}});
            }
        } else if (*bundlec) {
            if (!geometry_path.empty()) bspec.geometry = geometry_path;
            if (!probes_path.empty()) bspec.probes = probes_path;
            write_bundle(out_path, bspec);
            validate_bundle(load_bundle(out_path));
        } else if (*query) {
            const auto reg = open_registry(registry_path, bundle_dirs);
            const QueryApi api(reg);
            // Query errors print the same payload the service returns.
            try {
                if (*qn) {
                    print_json(api.neighbors(model, seed_name, k));
                } else if (*qm) {
                    print_json(api.closest_mode(model, seed_name, include_supervised));
                } else if (*qmodes) {
                    print_json(api.modes(model));
                } else if (*qi) {
                    print_json(api.ingredients(prefix, model.empty() ? std::nullopt : std::optional(model), limit));
                } else {
                    Json spec;
                    if (target_kind == "blend") {
                        spec = Json::array();
                        for (const auto& t : targets) spec.push_back(t);
                    } else {
                        if (targets.size() != 1) fail("invalid_input", "--target must be given once unless --target-kind blend");
                        spec = targets.front();
                    }
                    const Json req{{"model", model},
                                   {"seed", seed_name},
                                   {"target", {{"kind", target_kind}, {"spec", spec}}},
                                   {"angle_deg", angle},
                                   {"k", k},
                                   {"pole_style", pole_style}};
                    print_json(api.rotate(req));
                }
            } catch (const Error& e) {
                print_json(error_payload(e));
                return http_status(e) == 404 ? 2 : 1;
            }
        } else if (*serve) {
            auto reg = load_registry(registry_path);
            const auto [host, port] = parse_bind(bind.empty() ? reg.bind : bind);
            HttpService svc(reg);
            const int bound = svc.bind(host, port);
            sigset_t set;
            sigemptyset(&set);
            sigaddset(&set, SIGINT);
            sigaddset(&set, SIGTERM);
            pthread_sigmask(SIG_BLOCK, &set, nullptr);
            std::thread waiter([&] {
                int sig = 0;
                sigwait(&set, &sig);
                log_info("shutting down");
                svc.stop();
            });
            log_info("serving " + std::to_string(reg.bundles.size()) + " model(s) on " + host + ":" +
                     std::to_string(bound));
            std::cout << "listening " << host << ":" << bound << std::endl;
            svc.run();
            pthread_kill(waiter.native_handle(), SIGTERM);
            waiter.join();
        } else if (*run) {
            const auto cfg = PipelineConfig::load(config_path);
            if (!variants_flag.empty()) {
                std::vector<Variant> vs;
                std::size_t start = 0;
                while (start <= variants_flag.size()) {
                    auto comma = variants_flag.find(',', start);
                    if (comma == std::string::npos) comma = variants_flag.size();
                    const auto name = variants_flag.substr(start, comma - start);
                    const auto v = parse_variant(name);
                    if (!v) throw Error("invalid_input", "unknown variant '" + name + "'", {"cooc", "core", "chem"});
                    vs.push_back(*v);
                    start = comma + 1;
                }
                ropts.variants = vs;
            }
            const auto outcomes = run_pipeline(cfg, ropts);
            Json j = Json::array();
            for (const auto& o : outcomes) j.push_back({{"stage", o.stage}, {"skipped", o.skipped}});
            print_json(j);
        }
    } catch (const Error& e) {
        return report_error(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
