#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "siamgcn/common.hpp"

namespace siamgcn::csv {

using Row = std::vector<std::string>;

/// Splits on commas and trims surrounding whitespace. Quoting is not supported.
Row split_line(const std::string& line);

/// Reads every non-empty line; throws ValidationError if the file is missing.
std::vector<Row> read_rows(const std::filesystem::path& path);

/// Numeric matrix with an optional header row (detected when the first row
/// does not parse as numbers). Ragged rows throw with the offending line.
Matrix read_matrix(const std::filesystem::path& path);

void write_matrix(const std::filesystem::path& path, const Matrix& m,
                  const std::vector<std::string>& header = {});

/// %.17g, the fixed float format of every text output.
std::string format_double(double value);

double parse_double(const std::string& text, const std::string& context);

}  // namespace siamgcn::csv
