#pragma once

#include <string>
#include <string_view>

#include "cohort/record.hpp"

namespace lvo::cohort {

// Cohort CSV: UTF-8, comma separated, LF line endings, header of manifest
// columns plus id/lvo/mca_dot_present/weak_side/scan_id, booleans as 0/1,
// missing fields empty. The writer is canonical: loading a written file and
// writing it again reproduces the bytes exactly.
std::string csv_header();

Cohort parse_cohort_csv(std::string_view text);
std::string cohort_to_csv(const Cohort& records);

Cohort load_cohort_csv(const std::string& path);
void save_cohort_csv(const Cohort& records, const std::string& path);

// Canonical decimal form used in all CSV output: shortest representation
// that parses back to the identical 64-bit value.
std::string format_double(double v);

}  // namespace lvo::cohort
