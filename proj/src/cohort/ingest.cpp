#include "mhfa/cohort/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "mhfa/core/errors.hpp"
#include "mhfa/core/files.hpp"
#include "mhfa/core/text.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace mhfa::cohort {

ColumnMapping ColumnMapping::pmdata() {
    ColumnMapping m;
    m.dataset = "pmdata";
    m.record_file = "wellness.csv";
    m.behavior_columns = {{"steps", BehaviorField::steps},
                          {"calories_in", BehaviorField::calories_in},
                          {"calories_burned", BehaviorField::calories_burned},
                          {"exercise_minutes", BehaviorField::exercise_minutes},
                          {"sleep_minutes", BehaviorField::sleep_minutes},
                          {"resting_hr", BehaviorField::resting_hr}};
    m.record_columns = {{"fatigue", IndicatorKind::fatigue},
                        {"mood", IndicatorKind::mood},
                        {"stress", IndicatorKind::stress},
                        {"sleep_quality", IndicatorKind::sleep_quality_self},
                        {"readiness", IndicatorKind::readiness}};
    return m;
}

ColumnMapping ColumnMapping::globem() {
    ColumnMapping m;
    m.dataset = "globem";
    m.record_file = "surveys.csv";
    m.behavior_columns = {{"steps", BehaviorField::steps},
                          {"sleep_minutes", BehaviorField::sleep_minutes},
                          {"sleep_efficiency", BehaviorField::sleep_efficiency},
                          {"phone_usage_minutes", BehaviorField::phone_usage_minutes},
                          {"location_variance", BehaviorField::location_variance}};
    m.record_columns = {{"phq4", IndicatorKind::phq4},
                        {"pss4", IndicatorKind::pss4},
                        {"panas_pos", IndicatorKind::panas_pos},
                        {"panas_neg", IndicatorKind::panas_neg}};
    return m;
}

ColumnMapping ColumnMapping::from_json(const json& j) {
    const std::string dataset = j.value("dataset", std::string{"pmdata"});
    ColumnMapping m;
    if (dataset == "pmdata") {
        m = pmdata();
    } else if (dataset == "globem") {
        m = globem();
    } else {
        m.dataset = dataset;
    }
    m.behavior_file = j.value("behavior_file", m.behavior_file);
    m.record_file = j.value("record_file", m.record_file);
    m.portrait_file = j.value("portrait_file", m.portrait_file);
    m.date_column = j.value("date_column", m.date_column);
    if (j.contains("behavior_columns")) {
        m.behavior_columns.clear();
        for (const auto& [canonical, column] : j.at("behavior_columns").items()) {
            auto field = parse_behavior_field(canonical);
            if (!field) throw ValidationError(canonical, "unknown behavior field in mapping: " + canonical);
            m.behavior_columns.emplace_back(column.get<std::string>(), *field);
        }
    }
    if (j.contains("record_columns")) {
        m.record_columns.clear();
        for (const auto& [canonical, column] : j.at("record_columns").items()) {
            auto kind = parse_indicator(canonical);
            if (!kind) throw ValidationError(canonical, "unknown indicator in mapping: " + canonical);
            m.record_columns.emplace_back(column.get<std::string>(), *kind);
        }
    }
    if (m.record_file.empty()) throw ValidationError("record_file", "mapping has no record_file");
    return m;
}

json ColumnMapping::to_json() const {
    json::object_t behavior, records;
    for (const auto& [col, f] : behavior_columns) behavior[std::string(field_name(f))] = col;
    for (const auto& [col, k] : record_columns) records[std::string(indicator_name(k))] = col;
    return json{{"dataset", dataset},
                {"behavior_file", behavior_file},
                {"record_file", record_file},
                {"portrait_file", portrait_file},
                {"date_column", date_column},
                {"behavior_columns", behavior},
                {"record_columns", records}};
}

namespace {

std::optional<double> parse_strict_double(const std::string& cell) {
    const std::string t = trim(cell);
    if (t.empty()) return std::nullopt;
    double v = 0;
    auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc{} || ptr != t.data() + t.size() || !std::isfinite(v)) {
        throw ParseError("not a number: '" + t + "'");
    }
    return v;
}

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::pair<std::size_t, std::string>> lines;  // (line number, raw)
};

/// Returns nullopt when the file does not exist.
std::optional<CsvTable> read_csv(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    std::ifstream in(path);
    if (!in) throw IoError(path.string(), "cannot open file");
    CsvTable t;
    std::string line;
    std::size_t lineno = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        if (!have_header) {
            for (auto& cell : parse_csv_line(line)) t.header.push_back(trim(cell));
            have_header = true;
        } else {
            t.lines.emplace_back(lineno, line);
        }
    }
    return t;
}

std::optional<std::size_t> column_index(const std::vector<std::string>& header, const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) return std::nullopt;
    return static_cast<std::size_t>(it - header.begin());
}

std::string header_problem(const std::vector<std::string>& header, const std::string& date_column) {
    if (header.empty()) return "empty file or missing header";
    if (!column_index(header, date_column)) return "header has no '" + date_column + "' column";
    std::set<std::string> seen;
    for (const auto& h : header) {
        if (h.empty()) return "header has an empty column name";
        if (!seen.insert(h).second) return "header repeats column '" + h + "'";
    }
    return {};
}

void parse_behavior_file(const fs::path& path, const ColumnMapping& mapping, Participant& p, Cohort& cohort) {
    auto table = read_csv(path);
    if (!table) return;
    if (auto problem = header_problem(table->header, mapping.date_column); !problem.empty()) {
        cohort.file_errors.push_back({path.string(), problem});
        return;
    }
    const std::size_t date_idx = *column_index(table->header, mapping.date_column);
    std::vector<std::pair<std::size_t, BehaviorField>> cols;
    for (const auto& [name, field] : mapping.behavior_columns) {
        if (auto idx = column_index(table->header, name)) cols.emplace_back(*idx, field);
    }
    std::set<Date> seen;
    for (const auto& [lineno, raw] : table->lines) {
        auto reject = [&](std::string reason) {
            cohort.rejects.push_back({path.string(), lineno, std::move(reason), raw});
        };
        const auto cells = parse_csv_line(raw);
        if (cells.size() != table->header.size()) {
            reject("expected " + std::to_string(table->header.size()) + " cells, got " +
                   std::to_string(cells.size()));
            continue;
        }
        auto date = parse_date(trim(cells[date_idx]));
        if (!date) {
            reject("bad date '" + cells[date_idx] + "'");
            continue;
        }
        DailyBehavior day;
        day.date = *date;
        std::string problem;
        for (const auto& [idx, field] : cols) {
            try {
                day[field] = parse_strict_double(cells[idx]);
            } catch (const ParseError& e) {
                problem = std::string(field_name(field)) + ": " + e.what();
                break;
            }
        }
        if (problem.empty()) problem = validate_behavior(day);
        if (!problem.empty()) {
            reject(problem);
            continue;
        }
        if (!seen.insert(day.date).second) {
            reject("duplicate date " + format_date(day.date));
            continue;
        }
        p.days.push_back(day);
    }
    std::sort(p.days.begin(), p.days.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
}

void parse_record_file(const fs::path& path, const ColumnMapping& mapping, Participant& p, Cohort& cohort) {
    auto table = read_csv(path);
    if (!table) return;
    if (auto problem = header_problem(table->header, mapping.date_column); !problem.empty()) {
        cohort.file_errors.push_back({path.string(), problem});
        return;
    }
    const std::size_t date_idx = *column_index(table->header, mapping.date_column);
    std::vector<std::pair<std::size_t, IndicatorKind>> cols;
    for (const auto& [name, kind] : mapping.record_columns) {
        if (auto idx = column_index(table->header, name)) cols.emplace_back(*idx, kind);
    }
    std::set<Date> seen;
    for (const auto& [lineno, raw] : table->lines) {
        auto reject = [&](std::string reason) {
            cohort.rejects.push_back({path.string(), lineno, std::move(reason), raw});
        };
        const auto cells = parse_csv_line(raw);
        if (cells.size() != table->header.size()) {
            reject("expected " + std::to_string(table->header.size()) + " cells, got " +
                   std::to_string(cells.size()));
            continue;
        }
        auto date = parse_date(trim(cells[date_idx]));
        if (!date) {
            reject("bad date '" + cells[date_idx] + "'");
            continue;
        }
        MentalRecordEntry entry;
        entry.date = *date;
        std::string problem;
        for (const auto& [idx, kind] : cols) {
            std::optional<double> v;
            try {
                v = parse_strict_double(cells[idx]);
            } catch (const ParseError& e) {
                problem = std::string(indicator_name(kind)) + ": " + e.what();
                break;
            }
            if (!v) continue;
            MentalIndicator ind{kind, *v};
            if (!ind.in_scale()) {
                problem = std::string(indicator_name(kind)) + "=" + format_number(*v) + " outside scale [" +
                          format_number(ind.scale_min()) + "," + format_number(ind.scale_max()) + "]";
                break;
            }
            entry.set(kind, *v);
        }
        if (!problem.empty()) {
            reject(problem);
            continue;
        }
        if (!seen.insert(entry.date).second) {
            reject("duplicate date " + format_date(entry.date));
            continue;
        }
        p.records.push_back(std::move(entry));
    }
    std::sort(p.records.begin(), p.records.end(), [](const auto& a, const auto& b) { return a.date < b.date; });
}

void parse_portrait(const fs::path& path, Participant& p, Cohort& cohort) {
    if (!fs::exists(path)) return;
    try {
        const json j = json::parse(read_file(path));
        p.portrait.age_band = j.value("age_band", std::string{});
        p.portrait.gender = j.value("gender", std::string{});
        if (j.contains("traits")) p.portrait.traits = j.at("traits").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        cohort.file_errors.push_back({path.string(), std::string("bad portrait: ") + e.what()});
    }
}

}  // namespace

Cohort parse_cohort(const fs::path& root, const ColumnMapping& mapping) {
    if (!fs::is_directory(root)) throw IoError(root.string(), "cohort directory not found");
    std::vector<fs::path> folders;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) folders.push_back(entry.path());
    }
    std::sort(folders.begin(), folders.end());

    Cohort cohort;
    cohort.dataset = mapping.dataset;
    for (const auto& folder : folders) {
        Participant p;
        p.portrait.participant_id = folder.filename().string();
        parse_portrait(folder / mapping.portrait_file, p, cohort);
        parse_behavior_file(folder / mapping.behavior_file, mapping, p, cohort);
        parse_record_file(folder / mapping.record_file, mapping, p, cohort);
        cohort.participants.push_back(std::move(p));
    }
    return cohort;
}

Cohort parse_pmdata(const fs::path& root) { return parse_cohort(root, ColumnMapping::pmdata()); }
Cohort parse_globem(const fs::path& root) { return parse_cohort(root, ColumnMapping::globem()); }

Cohort subsample(const Cohort& cohort, double fraction, std::uint64_t seed) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw ValidationError("fraction", "fraction must be in [0,1]");
    std::vector<std::string> ids;
    for (const auto& p : cohort.participants) ids.push_back(p.id());
    std::sort(ids.begin(), ids.end());
    std::mt19937_64 rng(seed);
    std::shuffle(ids.begin(), ids.end(), rng);
    const auto keep = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(ids.size())));
    std::set<std::string> chosen(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(keep));

    Cohort out;
    out.dataset = cohort.dataset;
    out.rejects = cohort.rejects;
    out.file_errors = cohort.file_errors;
    for (const auto& p : cohort.participants) {
        if (chosen.count(p.id())) out.participants.push_back(p);
    }
    std::sort(out.participants.begin(), out.participants.end(),
              [](const Participant& a, const Participant& b) { return a.id() < b.id(); });
    return out;
}

void write_cohort(const Cohort& cohort, const fs::path& root, const ColumnMapping& mapping) {
    fs::create_directories(root);
    for (const auto& p : cohort.participants) {
        const fs::path dir = root / p.id();
        fs::create_directories(dir);

        std::ostringstream b;
        b << mapping.date_column;
        for (const auto& [col, field] : mapping.behavior_columns) b << ',' << csv_escape(col);
        b << '\n';
        for (const auto& day : p.days) {
            b << format_date(day.date);
            for (const auto& [col, field] : mapping.behavior_columns) {
                b << ',';
                if (day[field]) b << format_number(*day[field]);
            }
            b << '\n';
        }
        write_file(dir / mapping.behavior_file, b.str());

        std::ostringstream r;
        r << mapping.date_column;
        for (const auto& [col, kind] : mapping.record_columns) r << ',' << csv_escape(col);
        r << '\n';
        for (const auto& entry : p.records) {
            r << format_date(entry.date);
            for (const auto& [col, kind] : mapping.record_columns) {
                r << ',';
                if (const auto* ind = entry.find(kind)) r << format_number(ind->value);
            }
            r << '\n';
        }
        write_file(dir / mapping.record_file, r.str());

        const auto& pt = p.portrait;
        if (!pt.age_band.empty() || !pt.gender.empty() || !pt.traits.empty()) {
            nlohmann::ordered_json j;
            j["age_band"] = pt.age_band;
            j["gender"] = pt.gender;
            j["traits"] = pt.traits;
            write_file(dir / mapping.portrait_file, j.dump(2) + "\n");
        }
    }
}

}  // namespace mhfa::cohort
