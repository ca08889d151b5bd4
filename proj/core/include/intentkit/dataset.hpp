#pragma once

#include <string>
#include <vector>

namespace intentkit {

struct LabeledUtterance {
    std::string text;
    std::string label;

    bool operator==(const LabeledUtterance&) const = default;
};

using LabeledSet = std::vector<LabeledUtterance>;

// Reads (text, label) rows. ".jsonl" lines are objects with "text" (or "utterance") and "label";
// ".tsv" and ".csv" hold two columns with an optional "text,label" header. CSV fields may be
// double-quoted with "" as the escaped quote.
LabeledSet load_labeled(const std::string& path);
LabeledSet parse_delimited(const std::string& text, char delim, const std::string& source_name = "<memory>");
LabeledSet parse_labeled_jsonl(const std::string& text, const std::string& source_name = "<memory>");
void save_labeled_jsonl(const LabeledSet& rows, const std::string& path);

// One CSV/TSV record; quotes handled as above.
std::vector<std::string> split_delimited(const std::string& line, char delim);

// Non-empty lines, trailing '\r' removed.
std::vector<std::string> load_lines(const std::string& path);

// Sorted distinct labels.
std::vector<std::string> labels_of(const LabeledSet& rows);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& contents);

}  // namespace intentkit
