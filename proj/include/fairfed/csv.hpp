#pragma once

#include <istream>
#include <string>
#include <vector>

namespace fairfed::csv {

/// Splits one RFC 4180 record. Quoted fields may contain commas and doubled quotes.
/// Returns false at end of input.
bool read_record(std::istream& in, std::vector<std::string>& fields);

/// Quotes a field only when it contains a comma, quote or newline.
std::string escape(const std::string& field);

}  // namespace fairfed::csv
