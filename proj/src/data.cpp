#include "seqcox/data.hpp"

#include "seqcox/container.hpp"
#include "seqcox/log.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace seqcox {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return char(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '"' || s.back() == '\r')) {
        s.remove_suffix(1);
    }
    return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (true) {
        const std::size_t comma = line.find(',', pos);
        out.push_back(trim(line.substr(pos, comma - pos)));
        if (comma == std::string_view::npos) break;
        pos = comma + 1;
    }
    return out;
}

std::optional<double> parse_number(std::string_view s) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
    return v;
}

std::string fmt(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

std::vector<std::string_view> lines_of(std::string_view text) {
    std::vector<std::string_view> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) nl = text.size();
        std::string_view line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        out.push_back(line);
        pos = nl + 1;
    }
    return out;
}

bool is_index_column(const std::string& name) {
    return name.empty() || name == "rownames" || name == "index" || name == "unnamed: 0";
}

int treatment_code(std::string_view raw, std::size_t line_no) {
    const std::string s = lower(raw);
    if (s == "placebo" || s == "1") return int(Treatment::placebo);
    if (s == "thiotepa" || s == "2") return int(Treatment::thiotepa);
    if (s == "pyridoxine" || s == "3") return int(Treatment::pyridoxine);
    throw std::runtime_error("line " + std::to_string(line_no) + ": unknown treatment '" + std::string(raw) + "'");
}

}  // namespace

std::vector<std::string> all_feature_names() { return {kColumnNames.begin(), kColumnNames.end()}; }

Column column_from_name(std::string_view name) {
    const std::string key = lower(name);
    for (int i = 0; i < kColumnCount; ++i) {
        if (kColumnNames[i] == key) return Column(i);
    }
    throw std::invalid_argument("unknown feature column '" + std::string(name) + "'");
}

std::string_view treatment_label(int code) {
    switch (code) {
        case 1: return "placebo";
        case 2: return "thiotepa";
        case 3: return "pyridoxine";
        default: return "other";
    }
}

std::vector<PatientId> RecordTable::patient_ids() const {
    std::vector<PatientId> ids;
    for (const Record& r : rows) ids.push_back(r.patient_id);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    return ids;
}

std::map<PatientId, std::vector<const Record*>> RecordTable::by_patient() const {
    std::map<PatientId, std::vector<const Record*>> out;
    for (const Record& r : rows) out[r.patient_id].push_back(&r);
    for (auto& [id, recs] : out) {
        std::stable_sort(recs.begin(), recs.end(),
                         [](const Record* a, const Record* b) { return a->interval() < b->interval(); });
    }
    return out;
}

void validate_records(RecordTable& table) {
    std::stable_sort(table.rows.begin(), table.rows.end(), [](const Record& a, const Record& b) {
        return a.patient_id != b.patient_id ? a.patient_id < b.patient_id : a.interval() < b.interval();
    });
    for (std::size_t i = 0; i < table.rows.size(); ++i) {
        const Record& r = table.rows[i];
        const std::string where = "patient " + std::to_string(r.patient_id) + " interval " + std::to_string(r.interval());
        if (r[Column::start] < 0 || r[Column::stop] < 0) throw std::runtime_error(where + ": negative time");
        if (r[Column::start] > r[Column::stop]) throw std::runtime_error(where + ": start after stop");
        if (r.status() < 0 || r.status() > 3 || double(r.status()) != r[Column::status]) {
            throw std::runtime_error(where + ": status must be one of 0,1,2,3");
        }
        if (r.interval() < 1) throw std::runtime_error(where + ": enum must be >= 1");
        if (i > 0 && table.rows[i - 1].patient_id == r.patient_id) {
            const Record& prev = table.rows[i - 1];
            if (prev.interval() == r.interval()) throw std::runtime_error(where + ": duplicate (id, enum)");
            if (prev[Column::stop] > r[Column::start]) throw std::runtime_error(where + ": overlaps previous interval");
        }
    }
}

RecordTable parse_records(std::string_view text, LoadReport* report) {
    auto lines = lines_of(text);
    while (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
    if (lines.empty()) throw std::runtime_error("record file is empty");

    const auto header = split_csv(lines.front());
    static constexpr std::array<std::string_view, 11> required = {
        "id", "treatment", "number", "size", "recur", "start", "stop", "status", "rtumor", "rsize", "enum"};
    std::array<int, 11> position;
    std::map<std::string, std::vector<std::size_t>> missing_on_event;
    position.fill(-1);
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = lower(header[c]);
        auto it = std::find(required.begin(), required.end(), name);
        if (it != required.end()) {
            position[std::size_t(it - required.begin())] = int(c);
        } else if (!(c == 0 && is_index_column(name))) {
            throw std::runtime_error("line 1: unexpected column '" + std::string(header[c]) + "'");
        }
    }
    for (std::size_t k = 0; k < required.size(); ++k) {
        if (position[k] < 0) throw std::runtime_error("line 1: missing column '" + std::string(required[k]) + "'");
    }

    RecordTable table;
    for (std::size_t li = 1; li < lines.size(); ++li) {
        const std::size_t line_no = li + 1;
        if (trim(lines[li]).empty()) continue;
        const auto cells = split_csv(lines[li]);
        if (cells.size() != header.size()) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                                     " fields, got " + std::to_string(cells.size()));
        }
        auto cell = [&](std::size_t k) { return cells[std::size_t(position[k])]; };
        auto number = [&](std::size_t k) {
            auto v = parse_number(cell(k));
            if (!v) {
                throw std::runtime_error("line " + std::to_string(line_no) + ": column '" + std::string(required[k]) +
                                         "' has non-numeric value '" + std::string(cell(k)) + "'");
            }
            return *v;
        };

        Record r;
        const double id = number(0);
        if (id != std::floor(id)) throw std::runtime_error("line " + std::to_string(line_no) + ": id must be an integer");
        r.patient_id = PatientId(id);
        r[Column::treatment] = treatment_code(cell(1), line_no);
        r[Column::number] = number(2);
        r[Column::size] = number(3);
        r[Column::recur] = number(4);
        r[Column::start] = number(5);
        r[Column::stop] = number(6);
        r[Column::status] = number(7);
        r[Column::enumeration] = number(10);
        if (r[Column::start] < 0 || r[Column::stop] < 0) {
            throw std::runtime_error("line " + std::to_string(line_no) + ": negative time");
        }

        auto missing_aware = [&](std::size_t k, Column col, bool& missing) {
            if (cell(k) == ".") {
                missing = true;
                r[col] = 0.0;
                if (r.status() == 1 || r.status() == 2) missing_on_event[std::string(required[k])].push_back(line_no);
            } else {
                r[col] = number(k);
            }
        };
        missing_aware(8, Column::rtumor, r.rtumor_missing);
        missing_aware(9, Column::rsize, r.rsize_missing);
        table.rows.push_back(r);
    }
    if (table.rows.empty()) throw std::runtime_error("record file has a header but no rows");
    validate_records(table);
    for (const auto& [column, where] : missing_on_event) {
        std::string msg = std::to_string(where.size()) + " event interval(s) with missing " + column + " set to 0 (lines ";
        for (std::size_t j = 0; j < std::min<std::size_t>(where.size(), 5); ++j) msg += (j ? ", " : "") + std::to_string(where[j]);
        msg += where.size() > 5 ? ", ...)" : ")";
        log::warn(msg);
        if (report) report->warnings.push_back(msg);
    }
    return table;
}

RecordTable load_records(const std::filesystem::path& path, LoadReport* report) {
    return parse_records(read_file(path), report);
}

std::string format_records(const RecordTable& table) {
    std::ostringstream os;
    os << "id,treatment,number,size,recur,start,stop,status,rtumor,rsize,enum\n";
    for (const Record& r : table.rows) {
        os << r.patient_id;
        for (int c = 0; c < kColumnCount; ++c) {
            os << ',';
            if ((Column(c) == Column::rtumor && r.rtumor_missing) || (Column(c) == Column::rsize && r.rsize_missing)) {
                os << '.';
            } else {
                os << fmt(r.values[std::size_t(c)]);
            }
        }
        os << '\n';
    }
    return os.str();
}

void write_records(const std::filesystem::path& path, const RecordTable& table) {
    write_file(path, format_records(table));
}

Scaler fit_scaler(const RecordTable& table, const std::vector<std::string>& feature_names) {
    if (table.rows.empty()) throw std::invalid_argument("cannot fit a scaler on an empty table");
    Scaler scaler;
    const double n = double(table.rows.size());
    for (const auto& name : feature_names) {
        const Column c = column_from_name(name);
        double mean = 0.0;
        for (const Record& r : table.rows) mean += r[c];
        mean /= n;
        double var = 0.0;
        for (const Record& r : table.rows) var += (r[c] - mean) * (r[c] - mean);
        double sd = std::sqrt(var / n);
        if (!(sd > 1e-12 * std::max(1.0, std::abs(mean)))) sd = 1.0;
        scaler.push_back({std::string(kColumnNames[int(c)]), mean, sd});
    }
    return scaler;
}

RecordTable apply_scaler(const RecordTable& table, const Scaler& scaler) {
    RecordTable out = table;
    for (const FeatureScale& fs : scaler) {
        const Column c = column_from_name(fs.name);
        for (Record& r : out.rows) r[c] = (r[c] - fs.mean) / fs.std;
    }
    return out;
}

Standardized standardize(const RecordTable& table, const std::vector<std::string>& feature_names) {
    Scaler scaler = fit_scaler(table, feature_names);
    return {apply_scaler(table, scaler), std::move(scaler)};
}

SequenceTensor SequenceTensor::subset(const std::vector<std::size_t>& idx) const {
    if (idx.empty()) throw std::invalid_argument("empty subset");
    const std::size_t block = steps() * features();
    std::vector<double> values;
    values.reserve(idx.size() * block);
    SequenceTensor out;
    for (std::size_t i : idx) {
        if (i >= n()) throw std::out_of_range("subset index out of range");
        auto src = data.values().subspan(i * block, block);
        values.insert(values.end(), src.begin(), src.end());
        out.patient_ids.push_back(patient_ids[i]);
        out.valid_steps.push_back(valid_steps[i]);
    }
    out.data = Tensor::unchecked({idx.size(), steps(), features()}, std::move(values));
    out.feature_names = feature_names;
    out.scaler = scaler;
    return out;
}

bool SequenceTensor::operator==(const SequenceTensor& o) const {
    auto same_scaler = [](const Scaler& a, const Scaler& b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i) {
            if (a[i].name != b[i].name || a[i].mean != b[i].mean || a[i].std != b[i].std) return false;
        }
        return true;
    };
    return data == o.data && patient_ids == o.patient_ids && feature_names == o.feature_names &&
           valid_steps == o.valid_steps && same_scaler(scaler, o.scaler);
}

SequenceTensor build_sequences(const RecordTable& table, std::size_t steps,
                               const std::vector<std::string>& feature_names, const std::optional<Scaler>& scaler) {
    if (table.rows.empty()) throw std::invalid_argument("build_sequences: empty table");
    if (steps == 0) throw std::invalid_argument("build_sequences: steps must be positive");
    if (feature_names.empty()) throw std::invalid_argument("build_sequences: no features selected");

    const auto grouped = table.by_patient();
    RecordTable retained;
    std::vector<std::size_t> counts;
    for (const auto& [id, recs] : grouped) {
        const std::size_t k = std::min(recs.size(), steps);
        counts.push_back(k);
        for (std::size_t t = 0; t < k; ++t) retained.rows.push_back(*recs[t]);
    }

    SequenceTensor seq;
    seq.scaler = scaler ? *scaler : fit_scaler(retained, feature_names);
    if (seq.scaler.size() != feature_names.size()) throw std::invalid_argument("scaler does not match feature list");
    const RecordTable scaled = apply_scaler(retained, seq.scaler);

    std::vector<Column> cols;
    for (const auto& name : feature_names) {
        cols.push_back(column_from_name(name));
        seq.feature_names.emplace_back(kColumnNames[int(cols.back())]);
    }

    const std::size_t n = grouped.size();
    seq.data = Tensor({n, steps, cols.size()});
    std::size_t row = 0;
    std::size_t i = 0;
    for (const auto& [id, recs] : grouped) {
        seq.patient_ids.push_back(id);
        seq.valid_steps.push_back(counts[i]);
        for (std::size_t t = 0; t < counts[i]; ++t, ++row) {
            for (std::size_t f = 0; f < cols.size(); ++f) seq.data(i, t, f) = scaled.rows[row][cols[f]];
        }
        ++i;
    }
    return seq;
}

void write_sequences(const std::filesystem::path& path, const SequenceTensor& seq, const nlohmann::json& meta) {
    Container c;
    nlohmann::json scaler = nlohmann::json::array();
    for (const auto& fs : seq.scaler) scaler.push_back({{"name", fs.name}, {"mean", fs.mean}, {"std", fs.std}});
    c.header = {{"shape", seq.data.shape()},
                {"feature_names", seq.feature_names},
                {"patient_ids", seq.patient_ids},
                {"valid_steps", seq.valid_steps},
                {"scaler", scaler}};
    if (!meta.is_null()) c.header["meta"] = meta;
    c.payload.assign(seq.data.values().begin(), seq.data.values().end());
    write_container(path, "SQCXSEQ1", c);
}

SequenceTensor read_sequences(const std::filesystem::path& path) {
    Container c = read_container(path, "SQCXSEQ1");
    SequenceTensor seq;
    auto shape = c.header.at("shape").get<std::vector<std::size_t>>();
    if (shape.size() != 3) throw std::runtime_error("sequence tensor must be rank 3");
    seq.data = Tensor(shape, std::move(c.payload));
    seq.feature_names = c.header.at("feature_names").get<std::vector<std::string>>();
    seq.patient_ids = c.header.at("patient_ids").get<std::vector<PatientId>>();
    seq.valid_steps = c.header.at("valid_steps").get<std::vector<std::size_t>>();
    for (const auto& fs : c.header.at("scaler")) {
        seq.scaler.push_back({fs.at("name").get<std::string>(), fs.at("mean").get<double>(), fs.at("std").get<double>()});
    }
    if (seq.patient_ids.size() != shape[0] || seq.valid_steps.size() != shape[0] || seq.feature_names.size() != shape[2]) {
        throw std::runtime_error("sequence tensor header does not match its shape");
    }
    return seq;
}

std::vector<SurvivalOutcome> derive_survival(const RecordTable& table, const EventMapping& mapping) {
    std::vector<SurvivalOutcome> out;
    for (const auto& [id, recs] : table.by_patient()) {
        const double first_start = (*recs.front())[Column::start];
        const Record& last = *recs.back();
        SurvivalOutcome o{id, last[Column::stop] - first_start, mapping.event_codes.count(last.status()) != 0};
        if (mapping.rule == OutcomeRule::first_event) {
            auto hit = std::find_if(recs.begin(), recs.end(),
                                    [&](const Record* r) { return mapping.event_codes.count(r->status()) != 0; });
            o.event = hit != recs.end();
            if (o.event) o.time = (**hit)[Column::stop] - first_start;
        }
        if (o.time < 0) throw std::runtime_error("patient " + std::to_string(id) + ": last stop precedes first start");
        out.push_back(o);
    }
    return out;
}

std::string format_outcomes(const std::vector<SurvivalOutcome>& outcomes) {
    std::ostringstream os;
    os << "id,time,event\n";
    for (const auto& o : outcomes) os << o.patient_id << ',' << fmt(o.time) << ',' << (o.event ? 1 : 0) << '\n';
    return os.str();
}

std::vector<SurvivalOutcome> parse_outcomes(std::string_view text) {
    auto lines = lines_of(text);
    std::vector<SurvivalOutcome> out;
    bool header = true;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (trim(lines[i]).empty() || lines[i].front() == '#') continue;
        if (header) {
            header = false;
            continue;
        }
        const auto cells = split_csv(lines[i]);
        const auto bad = [&] { return std::runtime_error("outcomes line " + std::to_string(i + 1) + ": expected id,time,event"); };
        if (cells.size() != 3) throw bad();
        const auto id = parse_number(cells[0]), t = parse_number(cells[1]), e = parse_number(cells[2]);
        if (!id || !t || !e) throw bad();
        const double time = *t, event = *e;
        if ((event != 0 && event != 1) || time < 0) throw bad();
        out.push_back({PatientId(*id), time, event == 1});
    }
    return out;
}

double censoring_fraction(const std::vector<SurvivalOutcome>& outcomes) {
    if (outcomes.empty()) return 0.0;
    const auto censored = std::count_if(outcomes.begin(), outcomes.end(), [](const auto& o) { return !o.event; });
    return double(censored) / double(outcomes.size());
}

DataSummary describe(const RecordTable& table) {
    DataSummary s;
    s.n_rows = table.rows.size();
    const auto grouped = table.by_patient();
    s.n_patients = grouped.size();
    for (const auto& [id, recs] : grouped) ++s.treatment[std::string(treatment_label(int((*recs.front())[Column::treatment])))];

    for (int c = 0; c < kColumnCount; ++c) {
        if (Column(c) == Column::treatment || Column(c) == Column::status) continue;
        std::vector<double> v;
        for (const Record& r : table.rows) {
            if (Column(c) == Column::rtumor && r.rtumor_missing) continue;
            if (Column(c) == Column::rsize && r.rsize_missing) continue;
            v.push_back(r.values[std::size_t(c)]);
        }
        if (v.empty()) continue;
        std::sort(v.begin(), v.end());
        const std::size_t m = v.size();
        const double median = m % 2 ? v[m / 2] : 0.5 * (v[m / 2 - 1] + v[m / 2]);
        s.columns.push_back({std::string(kColumnNames[c]), v.front(), median,
                             std::accumulate(v.begin(), v.end(), 0.0) / double(m), v.back()});
    }
    return s;
}

}  // namespace seqcox
