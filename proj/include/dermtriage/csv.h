// Copyright 2026 The dermtriage Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef DERMTRIAGE_CSV_H_
#define DERMTRIAGE_CSV_H_

#include <string>
#include <vector>

namespace dermtriage {

// RFC 4180 subset: comma separated, double-quoted fields may contain commas
// and doubled quotes. No embedded newlines.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::vector<std::string> SplitCsvLine(const std::string& line);
CsvTable ReadCsv(const std::string& path);
std::string FormatCsv(const CsvTable& table);
void WriteCsv(const CsvTable& table, const std::string& path);

}  // namespace dermtriage

#endif  // DERMTRIAGE_CSV_H_
