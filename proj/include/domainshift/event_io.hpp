// SPDX-License-Identifier: Apache-2.0
//
// Event files: JSON Lines, one event per line, gzip variant selected by a
// .gz suffix. Field layout is part of the tool contract; writes are
// deterministic so identical generation settings give identical bytes.

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "domainshift/collider.hpp"

namespace domainshift {

// Line-oriented sink/source that transparently handles .gz paths.
class LineWriter {
 public:
  explicit LineWriter(const std::string& path);
  ~LineWriter();
  LineWriter(const LineWriter&) = delete;
  LineWriter& operator=(const LineWriter&) = delete;
  void write_line(const std::string& line);
  void close();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

class LineReader {
 public:
  explicit LineReader(const std::string& path);
  ~LineReader();
  LineReader(const LineReader&) = delete;
  LineReader& operator=(const LineReader&) = delete;
  bool next_line(std::string& line);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

std::string event_to_json(const Event& event);
Event event_from_json(const std::string& line);

void write_events(const std::string& path, const std::vector<Event>& events);
std::vector<Event> read_events(const std::string& path);

// Domain presets as JSON objects whose keys mirror the DomainConfig fields.
std::string domain_to_json(const DomainConfig& config);
DomainConfig domain_from_json(const std::string& text);

}  // namespace domainshift
