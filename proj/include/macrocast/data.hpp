#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <filesystem>
#include <istream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "macrocast/quarter.hpp"

namespace macrocast {

// Missing cells are quiet NaNs throughout the data layer.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
inline bool is_missing(double v) { return std::isnan(v); }

enum class Frequency { Monthly, Quarterly };
enum class SeriesKind { Level, YoyPercent, Index };

std::string_view to_string(Frequency f);
std::string_view to_string(SeriesKind k);
Frequency parse_frequency(std::string_view s);
SeriesKind parse_kind(std::string_view s);

struct Observation {
  int period = 0;  // MonthDate or QuarterDate ordinal, depending on the series frequency
  double value = kMissing;
};

struct RawSeries {
  std::string id;
  Frequency frequency = Frequency::Quarterly;
  SeriesKind kind = SeriesKind::YoyPercent;
  std::vector<Observation> observations;  // strictly increasing periods

  std::string date_label(int period) const;
  std::size_t observed_count() const;
  // Throws DataError when dates are not strictly increasing or a value is infinite.
  void validate() const;
};

// Returns the series with every period between the first and last observation
// present; periods that were absent become missing cells.
RawSeries regularized(const RawSeries& s);

struct LogEntry {
  std::string level;  // "info" or "warning"
  std::string op;
  std::string variable;
  std::string date;
  std::string message;
};

// Append-only record of data transforms. Serialized as JSON lines.
class TransformLog {
 public:
  void add(std::string level, std::string op, std::string variable, std::string date, std::string message);
  void append(const TransformLog& other);
  const std::vector<LogEntry>& entries() const { return entries_; }
  std::size_t warning_count() const;
  std::string to_jsonl() const;

 private:
  std::vector<LogEntry> entries_;
};

struct CsvSchema {
  std::string date = "date";
  std::string variable = "variable";
  std::string value = "value";
  std::string frequency = "frequency";
  std::string kind = "kind";
};

// Long-format ingestion: one row per (variable, date). Empty values are
// missing cells. Series are returned in order of first appearance.
std::vector<RawSeries> parse_csv(const std::filesystem::path& path, const CsvSchema& schema = {});
std::vector<RawSeries> parse_csv(std::istream& in, std::string_view source, const CsvSchema& schema = {});

// Year-over-year percent growth against the same period one year earlier.
// Zero or missing denominators produce missing cells (logged, not thrown).
RawSeries to_yoy(const RawSeries& s, TransformLog* log = nullptr);

// Arithmetic mean of the months present in each quarter.
RawSeries monthly_to_quarterly(const RawSeries& s);

enum class ImputeMethod { ForwardFill, ArFill };
ImputeMethod parse_impute_method(std::string_view s);

// Fills interior gaps. Observed cells pass through untouched; leading and
// trailing gaps stay missing.
RawSeries impute(const RawSeries& s, ImputeMethod method, TransformLog* log = nullptr);

struct ArFit {
  int order = 0;
  double intercept = 0.0;
  std::vector<double> coefficients;  // coefficients[i] multiplies y_{t-1-i}
  double aic = 0.0;
};

// Least-squares AR(p) with p chosen by AIC over 1..max_order on a common
// sample of fully observed lag windows. Returns nullopt when too few
// windows exist.
std::optional<ArFit> fit_ar_aic(const std::vector<double>& values, int max_order = 4);

// Quarterly design panel. Row i is index[i]; column j is columns[j].
struct Panel {
  std::vector<QuarterDate> index;
  std::vector<std::string> columns;
  Eigen::MatrixXd values;  // |index| x |columns|, NaN = missing
  std::string target_id;
  std::vector<std::optional<QuarterDate>> first_valid;  // per column

  int column(std::string_view id) const;  // -1 when absent
  int row(QuarterDate date) const;        // -1 when outside the index
  Eigen::VectorXd target() const;
  std::vector<std::string> indicator_columns() const;  // every column but the target

  // Rows with start <= date <= end. first_valid is recomputed.
  Panel slice(QuarterDate start, QuarterDate end) const;
  void validate() const;
};

// Builds the quarterly panel over [start, end]. Monthly series are averaged to
// quarters; column order is input order. Throws when the target is absent,
// not quarterly, or has a hole inside the window.
Panel assemble_panel(const std::vector<RawSeries>& series, const std::string& target_id, QuarterDate start,
                     QuarterDate end);

// Full preparation chain used by the CLI: level series -> YoY, interior gaps
// imputed, then assembled.
Panel prepare_panel(const std::vector<RawSeries>& series, const std::string& target_id, QuarterDate start,
                    QuarterDate end, ImputeMethod method, TransformLog* log = nullptr);

// Wide CSV: "date,<col>,<col>..." with empty cells for missing values.
std::string panel_to_csv(const Panel& panel);

}  // namespace macrocast
