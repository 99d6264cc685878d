#include "epicure/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

#include <glob.h>

#include "epicure/common.hpp"
#include "epicure/csv.hpp"

namespace epicure {

namespace {

constexpr std::array<std::string_view, kNumRegions> kRegionNames = {
    "East_Asian",    "Western_Atlantic", "Mediterranean",  "Eastern_European",
    "Southeast_Asian", "South_Asian",    "Latin_American", "Japanese",
};

constexpr std::string_view kScorePrefix = "score:";

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::optional<double> parse_double(std::string_view s) {
    while (!s.empty() && s.front() == ' ') s.remove_prefix(1);
    while (!s.empty() && s.back() == ' ') s.remove_suffix(1);
    if (s.empty()) return std::nullopt;
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) return std::nullopt;
    return v;
}

std::string trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

}  // namespace

std::string_view region_name(CuisineRegion r) { return kRegionNames[static_cast<std::size_t>(r)]; }

std::optional<CuisineRegion> parse_region(std::string_view label) {
    const std::string key = normalize_name(label);
    for (std::size_t i = 0; i < kNumRegions; ++i)
        if (normalize_name(kRegionNames[i]) == key) return static_cast<CuisineRegion>(i);
    return std::nullopt;
}

const std::array<CuisineRegion, kNumRegions>& all_regions() {
    static const std::array<CuisineRegion, kNumRegions> regions = [] {
        std::array<CuisineRegion, kNumRegions> r{};
        for (std::size_t i = 0; i < kNumRegions; ++i) r[i] = static_cast<CuisineRegion>(i);
        return r;
    }();
    return regions;
}

bool IngredientEntry::has_tag(CuisineRegion r) const {
    return std::find(cuisine_tags.begin(), cuisine_tags.end(), r) != cuisine_tags.end();
}

CanonicalVocabulary::CanonicalVocabulary(std::vector<IngredientEntry> entries,
                                         std::vector<std::string> probe_names)
    : entries_(std::move(entries)), probe_names_(std::move(probe_names)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        auto& e = entries_[i];
        e.id = static_cast<IngredientId>(i);
        e.name = normalize_name(e.name);
        if (e.name.empty()) fail("invalid_input", "vocabulary row " + std::to_string(i + 1) + " has an empty name");
        const auto [it, inserted] = name_index_.emplace(e.name, e.id);
        if (!inserted)
            fail("duplicate_name", "duplicate ingredient name '" + e.name + "' at entries " +
                                       std::to_string(it->second + 1) + " and " + std::to_string(i + 1));
    }
}

std::optional<IngredientId> CanonicalVocabulary::find(std::string_view name) const {
    const auto it = name_index_.find(normalize_name(name));
    if (it == name_index_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> CanonicalVocabulary::names() const {
    std::vector<std::string> out;
    out.reserve(entries_.size());
    for (const auto& e : entries_) out.push_back(e.name);
    return out;
}

CanonicalVocabulary parse_vocabulary(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) fail("invalid_input", origin + ": missing header row");
    const auto header = csv::split_line(line);

    int col_name = -1, col_fdb = -1, col_usda = -1, col_group = -1, col_nova = -1, col_tags = -1;
    std::vector<std::pair<int, std::string>> score_cols;
    for (std::size_t i = 0; i < header.size(); ++i) {
        const std::string h = trim(header[i]);
        const int c = static_cast<int>(i);
        if (h == "name") col_name = c;
        else if (h == "flavordb_id") col_fdb = c;
        else if (h == "usda_id") col_usda = c;
        else if (h == "food_group") col_group = c;
        else if (h == "nova") col_nova = c;
        else if (h == "cuisine_tags") col_tags = c;
        else if (h.starts_with(kScorePrefix)) score_cols.emplace_back(c, h.substr(kScorePrefix.size()));
    }
    if (col_name < 0) fail("invalid_input", origin + ": header has no 'name' column");

    std::vector<IngredientEntry> entries;
    std::vector<std::string> raw_names;
    std::vector<std::size_t> row_lines;
    std::unordered_map<std::string, std::size_t> seen;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        const auto cells = csv::split_line(line);
        auto cell = [&](int c) -> std::string {
            return c >= 0 && static_cast<std::size_t>(c) < cells.size() ? trim(cells[c]) : std::string();
        };
        const std::string where = origin + " line " + std::to_string(line_no);

        IngredientEntry e;
        e.name = normalize_name(cell(col_name));
        if (e.name.empty()) fail("invalid_input", where + ": empty ingredient name");
        if (const auto it = seen.find(e.name); it != seen.end())
            fail("duplicate_name", where + ": '" + cell(col_name) + "' duplicates '" + raw_names[it->second] +
                                       "' (line " + std::to_string(row_lines[it->second]) +
                                       ") after normalization to '" + e.name + "'");
        seen.emplace(e.name, entries.size());

        if (auto v = cell(col_fdb); !v.empty()) e.flavordb_anchor = v;
        if (auto v = cell(col_usda); !v.empty()) e.usda_anchor = v;
        if (auto v = cell(col_group); !v.empty()) e.food_group = normalize_name(v);
        if (auto v = cell(col_nova); !v.empty()) {
            const auto n = parse_double(v);
            if (!n || *n != static_cast<int>(*n) || *n < 1 || *n > 4)
                fail("invalid_input", where + ": nova class must be an integer 1-4, got '" + v + "'");
            e.nova_class = static_cast<int>(*n);
        }
        std::set<CuisineRegion> tags;
        for (const auto& t : csv::split_list(cell(col_tags))) {
            const auto r = parse_region(t);
            if (!r) fail("unknown_label", where + ": unknown cuisine label '" + t + "'");
            tags.insert(*r);
        }
        if (tags.size() > kMaxCuisineTags)
            fail("invalid_input", where + ": more than " + std::to_string(kMaxCuisineTags) + " cuisine tags");
        e.cuisine_tags.assign(tags.begin(), tags.end());
        for (const auto& [c, probe] : score_cols) {
            const std::string v = cell(c);
            if (v.empty()) continue;
            const auto d = parse_double(v);
            if (!d) fail("invalid_input", where + ": score '" + probe + "' is not numeric: '" + v + "'");
            e.continuous_scores[probe] = *d;
        }
        raw_names.push_back(cell(col_name));
        row_lines.push_back(line_no);
        entries.push_back(std::move(e));
    }

    std::vector<std::string> probes;
    for (const auto& sc : score_cols) probes.push_back(sc.second);
    return CanonicalVocabulary(std::move(entries), std::move(probes));
}

CanonicalVocabulary load_vocabulary(const std::filesystem::path& path) {
    return parse_vocabulary(read_text_file(path), path.string());
}

void write_vocabulary(const CanonicalVocabulary& vocab, const std::filesystem::path& path) {
    std::ostringstream out;
    std::vector<std::string> header = {"name", "flavordb_id", "usda_id", "food_group", "nova", "cuisine_tags"};
    for (const auto& p : vocab.probe_names()) header.push_back(std::string(kScorePrefix) + p);
    out << csv::join_line(header) << '\n';
    for (const auto& e : vocab.entries()) {
        std::vector<std::string> row;
        row.push_back(e.name);
        row.push_back(e.flavordb_anchor.value_or(""));
        row.push_back(e.usda_anchor.value_or(""));
        row.push_back(e.food_group.value_or(""));
        row.push_back(e.nova_class ? std::to_string(*e.nova_class) : "");
        std::string tags;
        for (const auto t : e.cuisine_tags) {
            if (!tags.empty()) tags.push_back('|');
            tags += region_name(t);
        }
        row.push_back(tags);
        for (const auto& p : vocab.probe_names()) {
            const auto it = e.continuous_scores.find(p);
            row.push_back(it == e.continuous_scores.end() ? "" : format_double(it->second));
        }
        out << csv::join_line(row) << '\n';
    }
    write_text_file(path, out.str());
}

std::size_t MatchedCorpus::n_pairless() const {
    return static_cast<std::size_t>(
        std::count_if(recipes.begin(), recipes.end(), [](const Recipe& r) { return r.pairless(); }));
}

namespace {

struct FileParse {
    std::vector<Recipe> recipes;
    std::size_t n_readable = 0;
    std::size_t n_malformed = 0;
    std::size_t n_raw_names = 0;
    std::size_t n_unmatched = 0;
    std::map<std::string, std::size_t> unmatched;
};

FileParse parse_recipe_file(const std::filesystem::path& path, std::uint32_t file_index,
                            const CanonicalVocabulary& vocab) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot open recipe file " + path.string());
    FileParse out;
    std::string line;
    std::uint32_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        Json rec;
        std::vector<std::string> names;
        std::string rid;
        try {
            rec = Json::parse(line);
            const auto& ings = rec.at("ingredients");
            if (!ings.is_array()) throw std::runtime_error("ingredients is not an array");
            for (const auto& n : ings) names.push_back(n.get<std::string>());
            if (rec.contains("id")) rid = rec["id"].is_string() ? rec["id"].get<std::string>() : rec["id"].dump();
        } catch (const std::exception& e) {
            log_warn(path.string() + ":" + std::to_string(line_no) + ": malformed recipe record skipped (" +
                     e.what() + ")");
            ++out.n_malformed;
            continue;
        }
        ++out.n_readable;
        Recipe r;
        r.id = rid;
        r.file_index = file_index;
        r.line = line_no;
        for (const auto& raw : names) {
            ++out.n_raw_names;
            if (const auto id = vocab.find(raw)) {
                r.ingredients.push_back(*id);
            } else {
                ++out.n_unmatched;
                ++out.unmatched[normalize_name(raw)];
            }
        }
        std::sort(r.ingredients.begin(), r.ingredients.end());
        r.ingredients.erase(std::unique(r.ingredients.begin(), r.ingredients.end()), r.ingredients.end());
        if (!r.ingredients.empty()) out.recipes.push_back(std::move(r));
    }
    return out;
}

}  // namespace

MatchedCorpus load_recipes(const std::vector<std::filesystem::path>& paths,
                           const CanonicalVocabulary& vocab, unsigned workers) {
    std::vector<FileParse> parsed(paths.size());
    workers = std::max(1u, workers);
    for (std::size_t start = 0; start < paths.size(); start += workers) {
        std::vector<std::future<FileParse>> batch;
        for (std::size_t i = start; i < std::min(paths.size(), start + workers); ++i) {
            batch.push_back(std::async(workers == 1 ? std::launch::deferred : std::launch::async,
                                       parse_recipe_file, paths[i], static_cast<std::uint32_t>(i),
                                       std::cref(vocab)));
        }
        for (std::size_t k = 0; k < batch.size(); ++k) parsed[start + k] = batch[k].get();
    }

    MatchedCorpus corpus;
    corpus.vocab_size = vocab.size();
    for (auto& p : parsed) {
        corpus.n_total_input += p.n_readable;
        corpus.n_malformed += p.n_malformed;
        corpus.n_raw_names += p.n_raw_names;
        corpus.n_unmatched_names += p.n_unmatched;
        for (const auto& [k, v] : p.unmatched) corpus.unmatched_counts[k] += v;
        for (auto& r : p.recipes) corpus.recipes.push_back(std::move(r));
    }
    corpus.n_matched = corpus.recipes.size();
    if (corpus.n_total_input == 0) fail("invalid_input", "no readable recipes in the given files");
    return corpus;
}

std::vector<std::filesystem::path> expand_glob(const std::string& pattern) {
    std::vector<std::filesystem::path> out;
    glob_t g{};
    const int rc = ::glob(pattern.c_str(), 0, nullptr, &g);
    if (rc == 0) {
        for (std::size_t i = 0; i < g.gl_pathc; ++i) out.emplace_back(g.gl_pathv[i]);
    }
    globfree(&g);
    if (out.empty()) fail("io", "no files match '" + pattern + "'");
    std::sort(out.begin(), out.end());
    return out;
}

Json ingest_report(const MatchedCorpus& corpus, const std::vector<std::filesystem::path>& paths) {
    std::vector<std::pair<std::string, std::size_t>> top(corpus.unmatched_counts.begin(),
                                                         corpus.unmatched_counts.end());
    std::stable_sort(top.begin(), top.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (top.size() > 25) top.resize(25);
    Json unmatched = Json::array();
    for (const auto& [name, n] : top) unmatched.push_back({{"name", name}, {"count", n}});
    Json files = Json::array();
    for (const auto& p : paths) files.push_back(p.filename().string());
    return {
        {"files", files},
        {"n_total_input", corpus.n_total_input},
        {"n_matched", corpus.n_matched},
        {"n_malformed", corpus.n_malformed},
        {"n_pairless", corpus.n_pairless()},
        {"match_rate", corpus.n_total_input ? double(corpus.n_matched) / double(corpus.n_total_input) : 0.0},
        {"n_raw_names", corpus.n_raw_names},
        {"n_unmatched_names", corpus.n_unmatched_names},
        {"vocab_size", corpus.vocab_size},
        {"top_unmatched", unmatched},
    };
}

void save_corpus(const MatchedCorpus& corpus, const std::filesystem::path& path) {
    Container c;
    c.header = {{"kind", "matched_corpus"},
                {"n_total_input", corpus.n_total_input},
                {"n_matched", corpus.n_matched},
                {"n_malformed", corpus.n_malformed},
                {"n_raw_names", corpus.n_raw_names},
                {"n_unmatched_names", corpus.n_unmatched_names},
                {"vocab_size", corpus.vocab_size},
                {"unmatched_counts", corpus.unmatched_counts}};
    std::vector<std::uint64_t> offsets{0};
    std::vector<std::uint32_t> ids, prov;
    std::string rids;
    for (const auto& r : corpus.recipes) {
        ids.insert(ids.end(), r.ingredients.begin(), r.ingredients.end());
        offsets.push_back(ids.size());
        prov.push_back(r.file_index);
        prov.push_back(r.line);
        rids += r.id;
        rids.push_back('\n');
    }
    c.add_section("offsets", pack<std::uint64_t>(offsets));
    c.add_section("ids", pack<std::uint32_t>(ids));
    c.add_section("provenance", pack<std::uint32_t>(prov));
    c.add_section("recipe_ids", std::vector<std::uint8_t>(rids.begin(), rids.end()));
    write_container(path, std::move(c));
}

MatchedCorpus load_corpus(const std::filesystem::path& path) {
    const Container c = read_container(path);
    if (c.header.value("kind", "") != "matched_corpus") fail("format", path.string() + " is not a corpus artifact");
    MatchedCorpus corpus;
    corpus.n_total_input = c.header.at("n_total_input");
    corpus.n_matched = c.header.at("n_matched");
    corpus.n_malformed = c.header.at("n_malformed");
    corpus.n_raw_names = c.header.at("n_raw_names");
    corpus.n_unmatched_names = c.header.at("n_unmatched_names");
    corpus.vocab_size = c.header.at("vocab_size");
    corpus.unmatched_counts = c.header.at("unmatched_counts").get<std::map<std::string, std::size_t>>();
    const auto offsets = unpack<std::uint64_t>(c.section("offsets"));
    const auto ids = unpack<std::uint32_t>(c.section("ids"));
    const auto prov = unpack<std::uint32_t>(c.section("provenance"));
    const auto& rid_bytes = c.section("recipe_ids");
    std::istringstream rid_stream(std::string(rid_bytes.begin(), rid_bytes.end()));
    if (offsets.empty() || offsets.back() != ids.size() || prov.size() != 2 * (offsets.size() - 1))
        fail("format", path.string() + ": inconsistent corpus sections");
    for (std::size_t i = 0; i + 1 < offsets.size(); ++i) {
        Recipe r;
        std::getline(rid_stream, r.id);
        r.ingredients.assign(ids.begin() + static_cast<std::ptrdiff_t>(offsets[i]),
                             ids.begin() + static_cast<std::ptrdiff_t>(offsets[i + 1]));
        r.file_index = prov[2 * i];
        r.line = prov[2 * i + 1];
        corpus.recipes.push_back(std::move(r));
    }
    return corpus;
}

}  // namespace epicure
