#pragma once

#include "seqcox/tensor.hpp"

#include <json.hpp>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace seqcox {

using PatientId = std::int64_t;

/// Numeric columns of the long-format recurrent-event table, in file order.
/// The position of each column is also its feature index in sequence tensors.
enum class Column : int { treatment, number, size, recur, start, stop, status, rtumor, rsize, enumeration };

inline constexpr int kColumnCount = 10;
inline constexpr std::array<std::string_view, kColumnCount> kColumnNames = {
    "treatment", "number", "size", "recur", "start", "stop", "status", "rtumor", "rsize", "enum"};

std::vector<std::string> all_feature_names();
Column column_from_name(std::string_view name);

/// Treatment arm codes used in the numeric table.
enum class Treatment : int { placebo = 1, thiotepa = 2, pyridoxine = 3 };

/// One at-risk interval of one patient.
struct Record {
    PatientId patient_id = 0;
    std::array<double, kColumnCount> values{};
    bool rtumor_missing = false;
    bool rsize_missing = false;

    double operator[](Column c) const { return values[static_cast<int>(c)]; }
    double& operator[](Column c) { return values[static_cast<int>(c)]; }
    int status() const { return static_cast<int>(values[static_cast<int>(Column::status)]); }
    int interval() const { return static_cast<int>(values[static_cast<int>(Column::enumeration)]); }

    bool operator==(const Record&) const = default;
};

/// Rows sorted by (patient_id, enum).
struct RecordTable {
    std::vector<Record> rows;

    std::vector<PatientId> patient_ids() const;
    /// Rows of each patient, keyed by id, in interval order.
    std::map<PatientId, std::vector<const Record*>> by_patient() const;

    bool operator==(const RecordTable&) const = default;
};

struct LoadReport {
    std::vector<std::string> warnings;
};

/// Parses comma-delimited text with a header naming the eleven schema columns
/// (case-insensitive, any order). A leading auto-generated index column
/// ("", "rownames", "index", "unnamed: 0") is dropped. Treatment may be a label
/// or an integer code. A '.' in rtumor/rsize becomes 0; on a recurrence or
/// death row this also adds a warning.
RecordTable load_records(const std::filesystem::path& path, LoadReport* report = nullptr);
RecordTable parse_records(std::string_view text, LoadReport* report = nullptr);

/// Canonical form: header, integer treatment codes, '.' for missing values.
std::string format_records(const RecordTable& table);
void write_records(const std::filesystem::path& path, const RecordTable& table);

/// Sorts by (patient_id, enum) and checks ordering, non-overlap, status codes and times.
void validate_records(RecordTable& table);

struct FeatureScale {
    std::string name;
    double mean = 0.0;
    double std = 1.0;
};

using Scaler = std::vector<FeatureScale>;

/// Population z-score per feature; a constant feature gets std recorded as 1.
Scaler fit_scaler(const RecordTable& table, const std::vector<std::string>& feature_names);
RecordTable apply_scaler(const RecordTable& table, const Scaler& scaler);

struct Standardized {
    RecordTable table;
    Scaler scaler;
};

Standardized standardize(const RecordTable& table, const std::vector<std::string>& feature_names);

struct SequenceTensor {
    Tensor data;  ///< N x T x F
    std::vector<PatientId> patient_ids;
    std::vector<std::string> feature_names;
    std::vector<std::size_t> valid_steps;
    Scaler scaler;

    std::size_t n() const { return data.dim(0); }
    std::size_t steps() const { return data.dim(1); }
    std::size_t features() const { return data.dim(2); }

    /// Rows `idx` of this tensor, same scaler and feature names.
    SequenceTensor subset(const std::vector<std::size_t>& idx) const;

    bool operator==(const SequenceTensor&) const;
};

/// One sequence per patient from its first `steps` intervals, standardized
/// with `scaler` if given, otherwise with a scaler fitted on the retained
/// intervals. Steps past a patient's interval count are zero.
SequenceTensor build_sequences(const RecordTable& table, std::size_t steps = 3,
                               const std::vector<std::string>& feature_names = all_feature_names(),
                               const std::optional<Scaler>& scaler = std::nullopt);

void write_sequences(const std::filesystem::path& path, const SequenceTensor& seq, const nlohmann::json& meta = {});
SequenceTensor read_sequences(const std::filesystem::path& path);

struct SurvivalOutcome {
    PatientId patient_id = 0;
    double time = 0.0;
    bool event = false;

    bool operator==(const SurvivalOutcome&) const = default;
};

enum class OutcomeRule {
    /// time = last stop - first start; event from the last interval's status.
    last_row,
    /// time = stop of the first event interval - first start (event), else the last_row time (censored).
    first_event,
};

struct EventMapping {
    std::set<int> event_codes{1, 2};
    OutcomeRule rule = OutcomeRule::last_row;
};

/// One outcome per patient in ascending id order. Row order of the input is irrelevant.
std::vector<SurvivalOutcome> derive_survival(const RecordTable& table, const EventMapping& mapping = {});

std::string format_outcomes(const std::vector<SurvivalOutcome>& outcomes);
/// Lines starting with '#' are skipped; the first other line is the header.
std::vector<SurvivalOutcome> parse_outcomes(std::string_view text);

/// Fraction of outcomes that are censored.
double censoring_fraction(const std::vector<SurvivalOutcome>& outcomes);

struct ColumnSummary {
    std::string name;
    double min = 0, median = 0, mean = 0, max = 0;
};

struct DataSummary {
    std::size_t n_patients = 0;
    std::size_t n_rows = 0;
    std::vector<ColumnSummary> columns;            ///< row-level, missing values excluded
    std::map<std::string, std::size_t> treatment;  ///< patients per arm
};

DataSummary describe(const RecordTable& table);

std::string_view treatment_label(int code);

}  // namespace seqcox
