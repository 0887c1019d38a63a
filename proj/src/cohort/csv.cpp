#include "cohort/csv.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include "cohort/manifest.hpp"
#include "common.hpp"

namespace lvo::cohort {

std::string format_double(double v) {
    char buf[40];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string csv_header() {
    std::string h = "id";
    for (const auto& col : kManifest) {
        h += ',';
        h += col.name;
    }
    h += ",lvo,mca_dot_present,weak_side,scan_id";
    return h;
}

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
    std::vector<std::string_view> out;
    size_t start = 0;
    while (true) {
        size_t pos = line.find(',', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            break;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
    return out;
}

[[noreturn]] void parse_fail(size_t line_no, std::string_view col, const std::string& what) {
    throw FormatError("line " + std::to_string(line_no) + ", column '" + std::string(col) +
                      "': " + what);
}

double parse_num(std::string_view s, size_t line_no, std::string_view col) {
    double v = 0.0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        parse_fail(line_no, col, "malformed numeric field '" + std::string(s) + "'");
    return v;
}

int parse_int(std::string_view s, size_t line_no, std::string_view col) {
    int v = 0;
    auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size())
        parse_fail(line_no, col, "malformed integer field '" + std::string(s) + "'");
    return v;
}

bool parse_bool(std::string_view s, size_t line_no, std::string_view col) {
    if (s == "0") return false;
    if (s == "1") return true;
    parse_fail(line_no, col, "boolean field must be 0 or 1, got '" + std::string(s) + "'");
}

}  // namespace

Cohort parse_cohort_csv(std::string_view text) {
    std::vector<std::string_view> lines;
    size_t start = 0;
    while (start < text.size()) {
        size_t pos = text.find('\n', start);
        if (pos == std::string_view::npos) {
            lines.push_back(text.substr(start));
            break;
        }
        lines.push_back(text.substr(start, pos - start));
        start = pos + 1;
    }
    // Tolerate CRLF input; the writer always emits LF.
    for (auto& l : lines)
        if (!l.empty() && l.back() == '\r') l.remove_suffix(1);
    if (lines.empty()) throw FormatError("empty cohort CSV");

    const std::string expected_header = csv_header();
    if (lines[0] != expected_header)
        throw FormatError("cohort CSV header does not match schema " +
                          std::string(kManifestVersion) + "; expected '" + expected_header + "'");

    const size_t n_cols = kManifest.size() + 5;
    Cohort records;
    std::unordered_set<std::string> seen_ids;
    for (size_t li = 1; li < lines.size(); ++li) {
        if (lines[li].empty() && li + 1 == lines.size()) break;  // trailing newline
        const size_t line_no = li + 1;
        auto fields = split_fields(lines[li]);
        if (fields.size() != n_cols)
            throw FormatError("line " + std::to_string(line_no) + ": expected " +
                              std::to_string(n_cols) + " fields, got " +
                              std::to_string(fields.size()));

        PatientRecord rec;
        size_t f = 0;
        rec.id = std::string(fields[f++]);
        if (rec.id.empty()) parse_fail(line_no, "id", "must not be empty");
        if (!seen_ids.insert(rec.id).second)
            throw ValidationError("duplicate id '" + rec.id + "' at line " + std::to_string(line_no));

        for (const auto& col : kManifest) {
            std::string_view s = fields[f++];
            if (s.empty()) {
                if (col.name == "age")
                    parse_fail(line_no, col.name, "age is required");
                if (col.name == "sex")
                    parse_fail(line_no, col.name, "sex is required");
                continue;  // missing stays missing
            }
            double v;
            if (col.kind == ColKind::binary)
                v = parse_bool(s, line_no, col.name) ? 1.0 : 0.0;
            else if (col.name == "gcs_total" || col.name == "gcs_eye" ||
                     col.name == "gcs_verbal" || col.name == "gcs_motor")
                v = parse_int(s, line_no, col.name);
            else
                v = parse_num(s, line_no, col.name);
            rec.set_feature(col.name, v);
        }

        {
            std::string_view s = fields[f++];
            if (s.empty()) parse_fail(line_no, "lvo", "label is required");
            rec.lvo = parse_bool(s, line_no, "lvo");
        }
        {
            std::string_view s = fields[f++];
            if (!s.empty()) rec.mca_dot_present = parse_bool(s, line_no, "mca_dot_present");
        }
        {
            std::string_view s = fields[f++];
            if (s.empty()) parse_fail(line_no, "weak_side", "value required (use 'unknown')");
            rec.weak_side = weak_side_from_string(std::string(s));
        }
        {
            std::string_view s = fields[f++];
            if (!s.empty()) rec.scan_id = std::string(s);
        }

        validate(rec);
        records.push_back(std::move(rec));
    }
    return records;
}

namespace {

void append_feature(std::string& out, const PatientRecord& rec, const ManifestColumn& col) {
    auto v = rec.feature(col.name);
    if (!v) return;
    if (col.kind == ColKind::binary) {
        out += (*v != 0.0) ? '1' : '0';
    } else if (col.name == "gcs_total" || col.name == "gcs_eye" || col.name == "gcs_verbal" ||
               col.name == "gcs_motor") {
        out += std::to_string(static_cast<long long>(*v));
    } else {
        out += format_double(*v);
    }
}

}  // namespace

std::string cohort_to_csv(const Cohort& records) {
    std::string out = csv_header();
    out += '\n';
    for (const auto& rec : records) {
        out += rec.id;
        for (const auto& col : kManifest) {
            out += ',';
            append_feature(out, rec, col);
        }
        out += ',';
        out += rec.lvo ? '1' : '0';
        out += ',';
        if (rec.mca_dot_present) out += *rec.mca_dot_present ? '1' : '0';
        out += ',';
        out += to_string(rec.weak_side);
        out += ',';
        if (rec.scan_id) out += *rec.scan_id;
        out += '\n';
    }
    return out;
}

Cohort load_cohort_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UsageError("cannot open cohort CSV '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_cohort_csv(ss.str());
}

void save_cohort_csv(const Cohort& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw UsageError("cannot write cohort CSV '" + path + "'");
    out << cohort_to_csv(records);
    if (!out) throw UsageError("I/O error writing '" + path + "'");
}

}  // namespace lvo::cohort
