#include "epicure/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <functional>

#include "epicure/embedding_view.hpp"
#include "epicure/ingest.hpp"
#include "epicure/service.hpp"

namespace epicure {

namespace fs = std::filesystem;

namespace {

template <typename T>
void set_size(const ConfigFile& c, const std::string& s, const std::string& k, T& out) {
    if (auto v = c.get(s, k)) out = static_cast<T>(parse_size(*v, "[" + s + "] " + k));
}

void set_double(const ConfigFile& c, const std::string& s, const std::string& k, double& out) {
    if (auto v = c.get(s, k)) out = parse_double(*v, "[" + s + "] " + k);
}

void set_bool(const ConfigFile& c, const std::string& s, const std::string& k, bool& out) {
    if (auto v = c.get(s, k)) out = parse_bool(*v, "[" + s + "] " + k);
}

struct Stage {
    std::string name;
    fs::path dir;
    Json config;
    std::vector<std::pair<std::string, fs::path>> inputs;
    std::vector<std::string> outputs;  // files relative to dir
    std::function<void()> run;
};

std::string stage_config_hash(const Json& config) { return sha256_hex(dump_json(config)); }

Json input_hashes(const Stage& s) {
    Json j = Json::object();
    for (const auto& [name, path] : s.inputs) {
        if (!fs::exists(path)) fail("missing_input", "stage " + s.name + ": input " + name + " (" + path.string() + ") not found");
        j[name] = sha256_file(path);
    }
    return j;
}

// Returns true when the stage is up to date. Throws in strict mode when a
// recorded output no longer matches its manifest.
bool up_to_date(const Stage& s, const Json& inputs, bool strict) {
    const auto mpath = s.dir / "manifest.json";
    if (!fs::exists(mpath)) return false;
    Json m;
    try {
        m = Json::parse(read_text_file(mpath));
    } catch (const Json::exception&) {
        if (strict) fail("stale_artifact", "stage " + s.name + ": manifest " + mpath.string() + " is unreadable");
        return false;
    }
    if (m.value("config_hash", "") != stage_config_hash(s.config)) return false;
    if (m.value("tool_version", "") != EPICURE_VERSION) return false;
    if (m.value("inputs", Json::object()) != inputs) return false;
    const auto outs = m.value("outputs", Json::object());
    for (const auto& rel : s.outputs) {
        const auto p = s.dir / rel;
        const bool ok = outs.contains(rel) && fs::exists(p) && sha256_file(p) == outs[rel].get<std::string>();
        if (!ok) {
            if (strict)
                fail("stale_artifact", "stage " + s.name + ": artifact " + p.string() +
                                           " does not match its manifest (stale or corrupted)");
            log_warn("stage " + s.name + ": artifact " + rel + " does not match its manifest; rerunning");
            return false;
        }
    }
    return true;
}

void write_manifest(const Stage& s, const Json& inputs, double seconds) {
    Json outs = Json::object();
    for (const auto& rel : s.outputs) {
        const auto p = s.dir / rel;
        if (!fs::exists(p)) fail("internal", "stage " + s.name + " did not produce " + rel);
        outs[rel] = sha256_file(p);
    }
    const Json m{{"stage", s.name},
                 {"tool_version", EPICURE_VERSION},
                 {"config_hash", stage_config_hash(s.config)},
                 {"config", s.config},
                 {"inputs", inputs},
                 {"outputs", outs}};
    write_text_file(s.dir / "manifest.json", dump_json(m));
    write_text_file(s.dir / "timing.json", dump_json(Json{{"stage", s.name}, {"wall_seconds", seconds}}));
}

Json atlas_options_json(const AtlasOptions& a) {
    return {{"n_components", a.factors.ica.n_components},
            {"max_iter", a.factors.ica.max_iter},
            {"tol", a.factors.ica.tol},
            {"seeds", a.factors.seeds},
            {"seed", a.factors.seed},
            {"split_half_threshold", a.factors.split_half_threshold},
            {"top_fraction", a.modes.top_fraction},
            {"min_high", a.modes.min_high},
            {"max_pca_dim", a.modes.max_pca_dim},
            {"k_min", a.modes.gmm.k_min},
            {"k_max", a.modes.gmm.k_max},
            {"min_members", a.modes.gmm.min_members},
            {"gmm_restarts", a.modes.gmm.restarts},
            {"baseline_pairs", a.baseline_pairs},
            {"supervised_sources", a.supervised_sources}};
}

}  // namespace

PipelineConfig PipelineConfig::from_config(const ConfigFile& c) {
    c.require_known("", {});
    c.require_known("inputs", {"vocab", "recipes", "compounds", "labels"});
    c.require_known("output", {"dir"});
    c.require_known("ingest", {"workers"});
    c.require_known("graph", {"min_recipe_count", "count_pairless", "min_compound_degree"});
    c.require_known("walk", {"walks_per_node", "walk_length", "seed", "core_ii_repeat", "workers"});
    c.require_known("train", {"dim", "window", "negatives", "batch_size", "lr", "epochs", "seed", "neg_exponent",
                              "beta1", "beta2", "eps", "workers"});
    c.require_known("geometry", {"bootstrap_iters", "bootstrap_frac", "kmeans_restarts", "knn_k", "seed"});
    c.require_known("probes", {"folds", "repeats", "seed", "min_n"});
    c.require_known("factors", {"n_components", "seeds", "seed", "split_half_threshold", "max_iter", "tol",
                                "top_fraction", "min_high", "max_pca_dim", "gmm_restarts", "min_members",
                                "baseline_pairs", "supervised_sources"});
    c.require_known("variants", {"train"});
    c.require_known("serve", {"bind", "cors_origin"});
    for (const auto& s : c.sections()) {
        static const std::vector<std::string> known{"",      "inputs",  "output",   "ingest",  "graph", "walk",
                                                   "train", "geometry", "probes", "factors", "variants", "serve"};
        if (std::find(known.begin(), known.end(), s) == known.end())
            throw Error("invalid_config", c.source() + ": unknown section [" + s + "]", closest_names(known, s, 3));
    }

    PipelineConfig p;
    auto need = [&](const std::string& s, const std::string& k) {
        const auto v = c.get(s, k);
        if (!v || v->empty()) fail("invalid_config", c.source() + ": missing [" + s + "] " + k);
        return *v;
    };
    p.vocab = c.resolve_path(need("inputs", "vocab"));
    p.compounds = c.resolve_path(need("inputs", "compounds"));
    for (const auto& r : c.get_list("inputs", "recipes")) p.recipes.push_back(c.resolve_path(r).string());
    if (p.recipes.empty()) fail("invalid_config", c.source() + ": missing [inputs] recipes");
    if (auto l = c.get("inputs", "labels"); l && !l->empty()) p.labels = c.resolve_path(*l);
    p.out_dir = c.resolve_path(c.get_or("output", "dir", "runs"));

    set_size(c, "ingest", "workers", p.ingest_workers);
    set_size(c, "graph", "min_recipe_count", p.npmi.min_recipe_count);
    set_bool(c, "graph", "count_pairless", p.npmi.count_pairless);
    set_size(c, "graph", "min_compound_degree", p.min_compound_degree);
    set_size(c, "walk", "walks_per_node", p.walks_per_node);
    set_size(c, "walk", "walk_length", p.walk_length);
    set_size(c, "walk", "seed", p.walk_seed);
    set_size(c, "walk", "core_ii_repeat", p.core_ii_repeat);
    set_size(c, "walk", "workers", p.walk_workers);

    auto& t = p.train;
    set_size(c, "train", "dim", t.dim);
    set_size(c, "train", "window", t.window);
    set_size(c, "train", "negatives", t.negatives);
    set_size(c, "train", "batch_size", t.batch_size);
    set_double(c, "train", "lr", t.lr);
    set_size(c, "train", "epochs", t.epochs);
    set_size(c, "train", "seed", t.seed);
    set_double(c, "train", "neg_exponent", t.neg_exponent);
    set_double(c, "train", "beta1", t.beta1);
    set_double(c, "train", "beta2", t.beta2);
    set_double(c, "train", "eps", t.eps);
    set_size(c, "train", "workers", t.workers);
    t.validate();

    set_size(c, "geometry", "bootstrap_iters", p.geometry.bootstrap_iters);
    set_double(c, "geometry", "bootstrap_frac", p.geometry.bootstrap_frac);
    set_size(c, "geometry", "kmeans_restarts", p.geometry.kmeans_restarts);
    set_size(c, "geometry", "knn_k", p.geometry.knn_k);
    set_size(c, "geometry", "seed", p.geometry.seed);

    set_size(c, "probes", "folds", p.probes.folds);
    set_size(c, "probes", "repeats", p.probes.repeats);
    set_size(c, "probes", "seed", p.probes.seed);
    set_size(c, "probes", "min_n", p.probes.min_n);

    auto& a = p.atlas;
    set_size(c, "factors", "n_components", a.factors.ica.n_components);
    set_size(c, "factors", "seeds", a.factors.seeds);
    set_size(c, "factors", "seed", a.factors.seed);
    set_double(c, "factors", "split_half_threshold", a.factors.split_half_threshold);
    set_size(c, "factors", "max_iter", a.factors.ica.max_iter);
    set_double(c, "factors", "tol", a.factors.ica.tol);
    set_double(c, "factors", "top_fraction", a.modes.top_fraction);
    set_size(c, "factors", "min_high", a.modes.min_high);
    set_size(c, "factors", "max_pca_dim", a.modes.max_pca_dim);
    set_size(c, "factors", "gmm_restarts", a.modes.gmm.restarts);
    set_size(c, "factors", "min_members", a.modes.gmm.min_members);
    set_size(c, "factors", "baseline_pairs", a.baseline_pairs);
    set_bool(c, "factors", "supervised_sources", a.supervised_sources);

    if (c.has("variants", "train")) {
        p.variants.clear();
        for (const auto& v : c.get_list("variants", "train")) {
            const auto pv = parse_variant(v);
            if (!pv) throw Error("invalid_config", c.source() + ": unknown variant '" + v + "'", {"cooc", "core", "chem"});
            p.variants.push_back(*pv);
        }
    }
    p.bind = c.get_or("serve", "bind", p.bind);
    p.cors_origin = c.get_or("serve", "cors_origin", "");
    return p;
}

PipelineConfig PipelineConfig::load(const fs::path& path) { return from_config(ConfigFile::load(path)); }

WalkSchema PipelineConfig::schema_for(Variant v) const {
    auto s = WalkSchema::for_variant(v);
    if (v == Variant::Core) s.ii_repeat = core_ii_repeat;
    s.walks_per_node = walks_per_node;
    s.walk_length = walk_length;
    s.rng_seed = walk_seed;
    return s;
}

std::vector<StageOutcome> run_pipeline(const PipelineConfig& cfg, const RunOptions& opts) {
    const RunLayout L{cfg.out_dir};
    const auto variants = opts.variants.value_or(cfg.variants);
    if (variants.empty()) fail("invalid_config", "no variants to train");

    std::vector<fs::path> recipe_files;
    for (const auto& g : cfg.recipes) {
        auto files = expand_glob(g);
        if (files.empty()) fail("missing_input", "recipe pattern matched no files: " + g);
        recipe_files.insert(recipe_files.end(), files.begin(), files.end());
    }

    std::shared_ptr<CanonicalVocabulary> vocab;
    auto get_vocab = [&]() -> const CanonicalVocabulary& {
        if (!vocab) vocab = std::make_shared<CanonicalVocabulary>(load_vocabulary(cfg.vocab));
        return *vocab;
    };

    std::vector<Stage> stages;
    {
        Stage s{"ingest", L.ingest(), Json{{"format", 1}}, {{"vocab", cfg.vocab}}, {"corpus.bin", "ingest_report.json"}, {}};
        for (const auto& f : recipe_files) s.inputs.emplace_back("recipes/" + f.filename().string(), f);
        s.run = [&, dir = s.dir] {
            const auto corpus = load_recipes(recipe_files, get_vocab(), cfg.ingest_workers);
            save_corpus(corpus, dir / "corpus.bin");
            write_text_file(dir / "ingest_report.json", dump_json(ingest_report(corpus, recipe_files)));
        };
        stages.push_back(std::move(s));
    }
    {
        Stage s{"graph",
                L.graph(),
                Json{{"min_recipe_count", cfg.npmi.min_recipe_count},
                     {"count_pairless", cfg.npmi.count_pairless},
                     {"min_compound_degree", cfg.min_compound_degree}},
                {{"corpus", L.ingest() / "corpus.bin"}, {"vocab", cfg.vocab}, {"compounds", cfg.compounds}},
                {"graph.bin", "stats.json"},
                {}};
        s.run = [&, dir = s.dir] {
            const auto corpus = load_corpus(L.ingest() / "corpus.bin");
            const auto cooc = compute_npmi_graph(corpus, get_vocab().names(), cfg.npmi);
            TypedGraphStats st;
            const auto typed = build_typed_graph(cooc, load_compound_file(cfg.compounds), cfg.min_compound_degree, &st);
            const Json stats{{"n_ingredients", cooc.n_nodes},
                             {"n_active", cooc.n_active()},
                             {"n_ii_edges", cooc.edges.size()},
                             {"n_recipes_marginal", cooc.n_recipes_marginal},
                             {"n_recipes_paired", cooc.n_recipes_paired},
                             {"n_source_compounds", st.n_source_compounds},
                             {"n_typed_before_filter", st.n_typed_before_filter},
                             {"n_typed_removed", st.n_typed_removed},
                             {"n_typed", typed.compounds.size()},
                             {"n_ic_edges", typed.ic_edges.size()},
                             {"n_hubs", typed.n_hubs()},
                             {"n_compound_rows_skipped", st.n_rows_skipped}};
            save_graph(typed, dir / "graph.bin", stats);
            write_text_file(dir / "stats.json", dump_json(stats));
        };
        stages.push_back(std::move(s));
    }
    for (const auto v : variants) {
        const std::string vn(variant_name(v));
        const auto schema = cfg.schema_for(v);
        {
            Stage s{vn + "/walk", L.walks(v), schema.to_json(), {{"graph", L.graph() / "graph.bin"}},
                    {"walks.bin", "walks.json"}, {}};
            s.run = [&, schema, dir = s.dir] {
                const auto g = load_graph(L.graph() / "graph.bin");
                save_walks(generate_walks(g, schema, cfg.walk_workers), dir);
            };
            stages.push_back(std::move(s));
        }
        {
            Json tc = cfg.train.to_json();
            Stage s{vn + "/train", L.model(v), tc,
                    {{"walks.bin", L.walks(v) / "walks.bin"}, {"walks.json", L.walks(v) / "walks.json"}},
                    {"embedding.bin"}, {}};
            s.run = [&, v, dir = s.dir] {
                const auto corpus = load_walks(L.walks(v));
                save_embedding(train(corpus, cfg.train), dir / "embedding.bin");
            };
            stages.push_back(std::move(s));
        }
        const auto emb_path = L.model(v) / "embedding.bin";
        {
            const auto& g = cfg.geometry;
            Stage s{vn + "/geometry", L.geometry(v),
                    Json{{"bootstrap_iters", g.bootstrap_iters}, {"bootstrap_frac", g.bootstrap_frac},
                         {"kmeans_restarts", g.kmeans_restarts}, {"knn_k", g.knn_k}, {"seed", g.seed}},
                    {{"embedding", emb_path}, {"vocab", cfg.vocab}}, {"geometry.json"}, {}};
            s.run = [&, emb_path, dir = s.dir] {
                const auto view = make_ingredient_view(load_embedding(emb_path), get_vocab());
                write_text_file(dir / "geometry.json", dump_json(geometry_report(view, get_vocab(), cfg.geometry).to_json()));
            };
            stages.push_back(std::move(s));
        }
        {
            const auto& p = cfg.probes;
            Stage s{vn + "/probes", L.probes(v),
                    Json{{"folds", p.folds}, {"repeats", p.repeats}, {"seed", p.seed}, {"min_n", p.min_n}},
                    {{"embedding", emb_path}, {"vocab", cfg.vocab}}, {"probes.json"}, {}};
            s.run = [&, emb_path, dir = s.dir] {
                const auto view = make_ingredient_view(load_embedding(emb_path), get_vocab());
                write_text_file(dir / "probes.json", dump_json(stratified_report(view, get_vocab(), cfg.probes).to_json()));
            };
            stages.push_back(std::move(s));
        }
        {
            Stage s{vn + "/factors", L.atlas(v), atlas_options_json(cfg.atlas), {{"embedding", emb_path}, {"vocab", cfg.vocab}},
                    {"atlas.json"}, {}};
            if (cfg.labels) s.inputs.emplace_back("labels", *cfg.labels);
            s.run = [&, vn, emb_path, dir = s.dir] {
                const auto view = make_ingredient_view(load_embedding(emb_path), get_vocab());
                auto atlas = build_atlas(view, get_vocab(), cfg.atlas, vn);
                if (cfg.labels) apply_labels(atlas, *cfg.labels);
                save_atlas(atlas, dir / "atlas.json");
            };
            stages.push_back(std::move(s));
        }
        {
            Stage s{vn + "/bundle", L.bundle(v), Json{{"name", vn}},
                    {{"embedding", emb_path},
                     {"atlas", L.atlas(v) / "atlas.json"},
                     {"geometry", L.geometry(v) / "geometry.json"},
                     {"probes", L.probes(v) / "probes.json"},
                     {"vocab", cfg.vocab}},
                    {"bundle.json", "embedding.bin", "atlas.json", "geometry.json", "probes.json"}, {}};
            s.run = [&, v, vn, emb_path, dir = s.dir] {
                BundleSpec b;
                b.name = vn;
                b.vocab = cfg.vocab;
                b.embedding = emb_path;
                b.atlas = L.atlas(v) / "atlas.json";
                b.geometry = L.geometry(v) / "geometry.json";
                b.probes = L.probes(v) / "probes.json";
                write_bundle(dir, b);
                validate_bundle(load_bundle(dir));
            };
            stages.push_back(std::move(s));
        }
    }

    std::vector<StageOutcome> out;
    for (const auto& s : stages) {
        const auto inputs = input_hashes(s);
        if (!opts.force && up_to_date(s, inputs, opts.strict)) {
            log_info("stage " + s.name + ": up to date, skipped");
            out.push_back({s.name, true, 0.0});
            continue;
        }
        log_info("stage " + s.name + ": running");
        fs::create_directories(s.dir);
        const auto t0 = std::chrono::steady_clock::now();
        s.run();
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        write_manifest(s, inputs, secs);
        out.push_back({s.name, false, secs});
    }

    std::string models;
    for (std::size_t i = 0; i < variants.size(); ++i)
        models += (i ? ", " : "") + (std::string(variant_name(variants[i])) + "/bundle");
    std::string reg = "models = [" + models + "]\nbind = " + cfg.bind + "\n";
    if (!cfg.cors_origin.empty()) reg += "cors_origin = " + cfg.cors_origin + "\n";
    write_text_file(L.registry(), reg);
    return out;
}

}  // namespace epicure
