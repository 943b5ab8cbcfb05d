#pragma once

// Prompt registry (variants P1-P7 per task and prompt language) and rendering
// of a registry entry into a single-turn system+user chat request.
//
// Registry layout on disk:
//   <dir>/guidelines/{en,es}.txt         one guideline sentence per line
//   <dir>/<variant>-<task>-<lang>/manifest.json
//   <dir>/<variant>-<task>-<lang>/system.txt
//   <dir>/<variant>-<task>-<lang>/user.txt
// Templates use "____" for example/target slots and "{{guidelines}}" for the
// guideline block.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "clears/corpus.hpp"
#include "clears/error.hpp"
#include "clears/text.hpp"

namespace clears {

inline constexpr std::string_view kSlotMarker = "____";
inline constexpr std::string_view kGuidelineMarker = "{{guidelines}}";

enum class Language { EN, ES };
enum class OutputMode { free_text, dict_literal };
enum class Provenance { verbatim, reconstructed };

inline std::string to_string(Language l) { return l == Language::EN ? "EN" : "ES"; }
inline std::string to_string(OutputMode m) { return m == OutputMode::free_text ? "free_text" : "dict_literal"; }
inline std::string to_string(Provenance p) { return p == Provenance::verbatim ? "verbatim" : "reconstructed"; }

inline Language parse_language(std::string_view s) {
    const auto l = text::to_lower(s);
    if (l == "en") return Language::EN;
    if (l == "es") return Language::ES;
    throw Error("unknown prompt language '" + std::string(s) + "' (expected en or es)");
}

inline OutputMode parse_output_mode(std::string_view s) {
    if (s == "free_text") return OutputMode::free_text;
    if (s == "dict_literal") return OutputMode::dict_literal;
    throw Error("unknown output mode '" + std::string(s) + "'");
}

/// Normalizes "p7" / "P7" / "7" to "P7"; only P1..P7 exist.
inline std::string normalize_variant(std::string_view s) {
    std::string v(text::trim(s));
    if (!v.empty() && (v[0] == 'p' || v[0] == 'P')) v.erase(0, 1);
    if (v.size() != 1 || v[0] < '1' || v[0] > '7') throw Error("unknown prompt variant '" + std::string(s) + "'");
    return "P" + v;
}

inline int variant_number(std::string_view variant) { return normalize_variant(variant)[1] - '0'; }

struct GuidelineSet {
    Language language = Language::EN;
    std::vector<std::string> lines;

    std::string render() const { return text::join(lines, " "); }
};

struct PromptSpec {
    std::string variant;
    Task task = Task::PL;
    std::size_t shots = 0;
    Language language = Language::EN;
    bool include_guidelines = false;
    OutputMode output_mode = OutputMode::free_text;
    Provenance provenance = Provenance::verbatim;
    std::string note;
    std::string system_template;
    std::string user_template;

    std::string key() const { return variant + "-" + to_string(task) + "-" + to_string(language); }
};

using DecodeParams = std::map<std::string, nlohmann::json>;

/// Temperature 0 with a single completion.
inline DecodeParams default_decode_params() { return {{"temperature", 0}, {"n", 1}}; }

struct ChatRequest {
    std::string system_message;
    std::string user_message;
    std::string model_id;
    DecodeParams decode_params;
    // Bookkeeping for mock backends; not part of the content hash.
    std::string target_id;
    std::string target_text;
    std::string variant;
};

inline std::size_t count_occurrences(std::string_view haystack, std::string_view needle) {
    std::size_t n = 0;
    for (auto pos = haystack.find(needle); pos != std::string_view::npos; pos = haystack.find(needle, pos + needle.size()))
        ++n;
    return n;
}

inline std::string replace_all(std::string s, std::string_view from, std::string_view to) {
    for (auto pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size()))
        s.replace(pos, from.size(), to);
    return s;
}

namespace detail {

inline void validate_spec(const PromptSpec& spec) {
    const int n = variant_number(spec.variant);
    const std::size_t want_shots = n == 1 ? 0 : (n <= 4 ? 1 : 3);
    const auto where = "prompt " + spec.key() + ": ";
    if (spec.shots != want_shots)
        throw DataError(where + "shots must be " + std::to_string(want_shots) + " for " + spec.variant);
    if (spec.include_guidelines != (n >= 4))
        throw DataError(where + "guidelines flag inconsistent with " + spec.variant);
    if ((spec.output_mode == OutputMode::dict_literal) != (n >= 5))
        throw DataError(where + "output mode inconsistent with " + spec.variant);
    const auto slots = count_occurrences(spec.system_template, kSlotMarker) + count_occurrences(spec.user_template, kSlotMarker);
    if (slots != 2 * spec.shots + 1)
        throw DataError(where + "templates hold " + std::to_string(slots) + " slots, expected " +
                        std::to_string(2 * spec.shots + 1));
    const bool has_gl = spec.system_template.find(kGuidelineMarker) != std::string::npos ||
                        spec.user_template.find(kGuidelineMarker) != std::string::npos;
    if (has_gl != spec.include_guidelines) throw DataError(where + "guideline slot presence does not match manifest");
    if (spec.output_mode == OutputMode::dict_literal && spec.user_template.find("\"simple\"") == std::string::npos)
        throw DataError(where + "dict_literal template must name the \"simple\" key");
}

}  // namespace detail

class PromptRegistry {
public:
    using Key = std::tuple<std::string, Task, Language>;

    static PromptRegistry load(const std::filesystem::path& dir) {
        namespace fs = std::filesystem;
        if (!fs::is_directory(dir)) throw DataError("prompt registry directory not found: " + dir.string());
        PromptRegistry reg;
        reg.guidelines_[Language::EN] = {Language::EN, text::read_list_file(dir / "guidelines" / "en.txt")};
        reg.guidelines_[Language::ES] = {Language::ES, text::read_list_file(dir / "guidelines" / "es.txt")};
        for (const auto& [lang, set] : reg.guidelines_)
            if (set.lines.empty()) throw DataError("empty guideline set for " + to_string(lang));

        std::vector<fs::path> entries;
        for (const auto& e : fs::directory_iterator(dir))
            if (e.is_directory() && fs::exists(e.path() / "manifest.json")) entries.push_back(e.path());
        std::sort(entries.begin(), entries.end());
        for (const auto& p : entries) {
            nlohmann::json m;
            try {
                m = nlohmann::json::parse(text::read_file(p / "manifest.json"));
                PromptSpec spec;
                spec.variant = normalize_variant(m.at("variant").get<std::string>());
                spec.task = parse_task(m.at("task").get<std::string>());
                spec.language = parse_language(m.at("language").get<std::string>());
                spec.shots = m.at("shots").get<std::size_t>();
                spec.include_guidelines = m.at("guidelines").get<bool>();
                spec.output_mode = parse_output_mode(m.at("output_mode").get<std::string>());
                const auto prov = m.at("provenance").get<std::string>();
                if (prov != "verbatim" && prov != "reconstructed") throw DataError("bad provenance '" + prov + "'");
                spec.provenance = prov == "verbatim" ? Provenance::verbatim : Provenance::reconstructed;
                spec.note = m.value("note", "");
                spec.system_template = text::trim_trailing_newlines(text::read_file(p / "system.txt"));
                spec.user_template = text::trim_trailing_newlines(text::read_file(p / "user.txt"));
                detail::validate_spec(spec);
                const Key key{spec.variant, spec.task, spec.language};
                if (!reg.specs_.emplace(key, std::move(spec)).second)
                    throw DataError("duplicate registry entry");
            } catch (const nlohmann::json::exception& e) {
                throw DataError(p.string() + ": bad manifest: " + e.what());
            } catch (const Error& e) {
                throw DataError(p.string() + ": " + e.what());
            }
        }
        return reg;
    }

    const PromptSpec& get(std::string_view variant, Task task, Language language) const {
        const Key key{normalize_variant(variant), task, language};
        if (auto it = specs_.find(key); it != specs_.end()) return it->second;
        std::vector<std::string> names;
        for (const auto& [k, s] : specs_) names.push_back(s.key());
        throw Error("no prompt for " + std::get<0>(key) + "-" + to_string(task) + "-" + to_string(language) +
                    "; available: " + text::join(names, ", "));
    }

    bool contains(std::string_view variant, Task task, Language language) const {
        return specs_.contains(Key{normalize_variant(variant), task, language});
    }

    const GuidelineSet& guidelines(Language l) const { return guidelines_.at(l); }

    std::vector<const PromptSpec*> entries() const {
        std::vector<const PromptSpec*> out;
        for (const auto& [k, s] : specs_) out.push_back(&s);
        return out;
    }

private:
    std::map<Key, PromptSpec> specs_;
    std::map<Language, GuidelineSet> guidelines_;
};

namespace detail {

inline std::string fill_slots(std::string_view tmpl, const std::vector<std::string>& values, std::size_t& next) {
    std::string out;
    std::size_t pos = 0;
    for (auto hit = tmpl.find(kSlotMarker); hit != std::string_view::npos; hit = tmpl.find(kSlotMarker, pos)) {
        out.append(tmpl.substr(pos, hit - pos));
        out += values.at(next++);
        pos = hit + kSlotMarker.size();
    }
    out.append(tmpl.substr(pos));
    return out;
}

}  // namespace detail

/// Fills slots in order (example 1 complex, example 1 simple, ..., target source),
/// system template first, then user template.
inline ChatRequest render_messages(const PromptSpec& spec, const Document& target,
                                   const std::vector<FewShotExample>& examples, const GuidelineSet* guidelines,
                                   std::string model_id = {}, DecodeParams decode_params = default_decode_params()) {
    if (examples.size() != spec.shots)
        throw Error("template " + spec.key() + " expects " + std::to_string(spec.shots) + " examples, got " +
                    std::to_string(examples.size()));
    if (spec.include_guidelines != (guidelines != nullptr))
        throw Error("template " + spec.key() + (spec.include_guidelines ? " requires" : " takes no") + " guidelines");
    if (guidelines && guidelines->language != spec.language)
        throw Error("template " + spec.key() + " needs " + to_string(spec.language) + " guidelines, got " +
                    to_string(guidelines->language));

    std::vector<std::string> values;
    for (const auto& ex : examples) {
        values.push_back(ex.complex_text);
        values.push_back(ex.simple_text);
    }
    values.push_back(target.source_text);

    const auto slots = count_occurrences(spec.system_template, kSlotMarker) + count_occurrences(spec.user_template, kSlotMarker);
    if (slots != values.size())
        throw Error("template " + spec.key() + " has " + std::to_string(slots) + " slots, expected " +
                    std::to_string(values.size()));

    const std::string gl = guidelines ? guidelines->render() : std::string();
    std::size_t next = 0;
    ChatRequest req;
    req.system_message = detail::fill_slots(replace_all(spec.system_template, kGuidelineMarker, gl), values, next);
    req.user_message = detail::fill_slots(replace_all(spec.user_template, kGuidelineMarker, gl), values, next);
    req.model_id = std::move(model_id);
    req.decode_params = std::move(decode_params);
    req.target_id = target.id;
    req.target_text = target.source_text;
    req.variant = spec.variant;
    return req;
}

}  // namespace clears
