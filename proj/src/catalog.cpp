// Copyright 2026 The TalkPlay Authors.
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

#include "talkplay/catalog.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "talkplay/binary_io.hpp"

namespace talkplay::catalog {

using nlohmann::json;

Catalog::Catalog(std::vector<Track> tracks, std::vector<Playlist> playlists)
    : tracks_(std::move(tracks)), playlists_(std::move(playlists)) {
  for (std::size_t i = 0; i < tracks_.size(); ++i) {
    const Track& t = tracks_[i];
    if (t.track_id.empty()) throw IntegrityError("track with empty track_id");
    if (t.title.empty()) throw IntegrityError("track " + t.track_id + ": empty title");
    if (t.artist.empty()) throw IntegrityError("track " + t.track_id + ": empty artist");
    if (t.popularity && (*t.popularity < 0.0 || *t.popularity > 100.0)) {
      throw IntegrityError("track " + t.track_id + ": popularity outside [0,100]");
    }
    if (!by_id_.emplace(t.track_id, i).second) {
      throw IntegrityError("duplicate track_id " + t.track_id);
    }
  }
  for (std::size_t i = 0; i < playlists_.size(); ++i) {
    const Playlist& p = playlists_[i];
    if (p.track_ids.empty()) throw IntegrityError("playlist " + p.playlist_id + " is empty");
    for (const auto& id : p.track_ids) {
      if (!by_id_.contains(id)) {
        throw IntegrityError("playlist " + p.playlist_id + " references unknown track " + id);
      }
    }
    if (!playlist_by_id_.emplace(p.playlist_id, i).second) {
      throw IntegrityError("duplicate playlist_id " + p.playlist_id);
    }
  }
}

const Track* Catalog::find(std::string_view track_id) const {
  auto it = by_id_.find(std::string(track_id));
  return it == by_id_.end() ? nullptr : &tracks_[it->second];
}

const Track& Catalog::at(std::string_view track_id) const {
  const Track* t = find(track_id);
  if (!t) throw NotFound("unknown track " + std::string(track_id));
  return *t;
}

const Playlist* Catalog::find_playlist(std::string_view playlist_id) const {
  auto it = playlist_by_id_.find(std::string(playlist_id));
  return it == playlist_by_id_.end() ? nullptr : &playlists_[it->second];
}

double Catalog::popularity_or_zero(std::string_view track_id) const {
  const Track* t = find(track_id);
  return t && t->popularity ? *t->popularity : 0.0;
}

std::chrono::year_month_day parse_date(std::string_view text) {
  int y = 0;
  unsigned m = 0, d = 0;
  char tail = 0;
  std::string s(text);
  if (s.size() != 10 || std::sscanf(s.c_str(), "%4d-%2u-%2u%c", &y, &m, &d, &tail) != 3) {
    throw ParseError("bad date '" + s + "', expected YYYY-MM-DD");
  }
  std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m},
                                  std::chrono::day{d}};
  if (!ymd.ok()) throw ParseError("invalid calendar date '" + s + "'");
  return ymd;
}

std::string format_date(std::chrono::year_month_day d) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02u-%02u", static_cast<int>(d.year()),
                static_cast<unsigned>(d.month()), static_cast<unsigned>(d.day()));
  return buf;
}

namespace {

[[noreturn]] void field_error(std::size_t line_no, const std::string& field,
                              const std::string& msg) {
  throw ParseError("line " + std::to_string(line_no) + ", field '" + field + "': " + msg);
}

std::string require_string(const json& j, const char* field, std::size_t line_no) {
  if (!j.contains(field)) field_error(line_no, field, "missing");
  if (!j[field].is_string()) field_error(line_no, field, "expected string");
  return j[field].get<std::string>();
}

json parse_object(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
  }
  if (!j.is_object()) throw ParseError("line " + std::to_string(line_no) + ": expected object");
  return j;
}

template <typename Fn>
void for_each_line(const std::filesystem::path& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open " + path.string());
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](unsigned char c) { return std::isspace(c); })) {
      continue;
    }
    try {
      fn(line, line_no);
    } catch (const ParseError& e) {
      throw ParseError(path.filename().string() + ": " + e.what());
    }
  }
}

}  // namespace

Track parse_track_line(std::string_view line, std::size_t line_no) {
  json j = parse_object(line, line_no);
  Track t;
  t.track_id = require_string(j, "track_id", line_no);
  t.title = require_string(j, "title", line_no);
  t.artist = require_string(j, "artist", line_no);
  if (j.contains("album") && !j["album"].is_null()) t.album = require_string(j, "album", line_no);
  if (j.contains("tags") && !j["tags"].is_null()) {
    if (!j["tags"].is_array()) field_error(line_no, "tags", "expected array");
    for (const auto& tag : j["tags"]) {
      if (!tag.is_string()) field_error(line_no, "tags", "expected array of strings");
      t.tags.push_back(tag.get<std::string>());
    }
  }
  if (j.contains("year") && !j["year"].is_null()) {
    if (!j["year"].is_number_integer()) field_error(line_no, "year", "expected integer");
    t.year = j["year"].get<int>();
  }
  if (j.contains("popularity") && !j["popularity"].is_null()) {
    if (!j["popularity"].is_number()) field_error(line_no, "popularity", "expected number");
    double p = j["popularity"].get<double>();
    if (!(p >= 0.0 && p <= 100.0)) field_error(line_no, "popularity", "outside [0,100]");
    t.popularity = p;
  }
  if (j.contains("lyrics") && !j["lyrics"].is_null()) t.lyrics = require_string(j, "lyrics", line_no);
  if (t.title.empty()) field_error(line_no, "title", "empty");
  if (t.artist.empty()) field_error(line_no, "artist", "empty");
  return t;
}

Playlist parse_playlist_line(std::string_view line, std::size_t line_no) {
  json j = parse_object(line, line_no);
  Playlist p;
  p.playlist_id = require_string(j, "playlist_id", line_no);
  try {
    p.created_at = parse_date(require_string(j, "created_at", line_no));
  } catch (const ParseError& e) {
    field_error(line_no, "created_at", e.what());
  }
  if (!j.contains("track_ids") || !j["track_ids"].is_array()) {
    field_error(line_no, "track_ids", "expected array");
  }
  for (const auto& id : j["track_ids"]) {
    if (!id.is_string()) field_error(line_no, "track_ids", "expected array of strings");
    p.track_ids.push_back(id.get<std::string>());
  }
  if (p.track_ids.empty()) field_error(line_no, "track_ids", "empty");
  return p;
}

std::string track_to_json_line(const Track& t) {
  json j = {{"track_id", t.track_id}, {"title", t.title}, {"artist", t.artist},
            {"album", t.album}, {"tags", t.tags}};
  j["year"] = t.year ? json(*t.year) : json(nullptr);
  j["popularity"] = t.popularity ? json(*t.popularity) : json(nullptr);
  j["lyrics"] = t.lyrics ? json(*t.lyrics) : json(nullptr);
  return j.dump();
}

std::string playlist_to_json_line(const Playlist& p) {
  json j = {{"playlist_id", p.playlist_id},
            {"created_at", format_date(p.created_at)},
            {"track_ids", p.track_ids}};
  return j.dump();
}

Catalog load_catalog(const std::filesystem::path& dir) {
  std::vector<Track> tracks;
  std::vector<Playlist> playlists;
  for_each_line(dir / "tracks.jsonl", [&](const std::string& line, std::size_t n) {
    tracks.push_back(parse_track_line(line, n));
  });
  for_each_line(dir / "playlists.jsonl", [&](const std::string& line, std::size_t n) {
    playlists.push_back(parse_playlist_line(line, n));
  });
  return Catalog(std::move(tracks), std::move(playlists));
}

void save_catalog(const Catalog& catalog, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream tracks(dir / "tracks.jsonl");
  for (const auto& t : catalog.tracks()) tracks << track_to_json_line(t) << '\n';
  std::ofstream playlists(dir / "playlists.jsonl");
  for (const auto& p : catalog.playlists()) playlists << playlist_to_json_line(p) << '\n';
  if (!tracks || !playlists) throw Error("failed writing catalog to " + dir.string());
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingMatrix::EmbeddingMatrix(Modality modality, std::uint32_t dim)
    : modality_(modality), dim_(dim) {
  if (dim == 0) throw InvalidArgument("embedding dim must be positive");
}

void EmbeddingMatrix::add_row(std::string track_id, std::span<const float> values) {
  if (values.size() != dim_) {
    throw LoadError("row " + track_id + ": dim " + std::to_string(values.size()) +
                    " != " + std::to_string(dim_));
  }
  for (float v : values) {
    if (!std::isfinite(v)) throw LoadError("row " + track_id + ": non-finite value");
  }
  if (!index_.emplace(track_id, ids_.size()).second) {
    throw LoadError("duplicate embedding row " + track_id);
  }
  ids_.push_back(std::move(track_id));
  data_.insert(data_.end(), values.begin(), values.end());
}

std::span<const float> EmbeddingMatrix::row(std::size_t i) const {
  return std::span<const float>(data_).subspan(i * dim_, dim_);
}

std::span<float> EmbeddingMatrix::mutable_row(std::size_t i) {
  return std::span<float>(data_).subspan(i * dim_, dim_);
}

std::optional<std::span<const float>> EmbeddingMatrix::find(std::string_view track_id) const {
  auto it = index_.find(std::string(track_id));
  if (it == index_.end()) return std::nullopt;
  return row(it->second);
}

namespace {
constexpr std::string_view kEmbMagic = "TPEMB1";
}

void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  binio::Writer w(out);
  w.magic(kEmbMagic);
  w.put<std::uint8_t>(static_cast<std::uint8_t>(m.modality()));
  w.put<std::uint32_t>(m.dim());
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
  for (std::size_t i = 0; i < m.rows(); ++i) {
    w.str16(m.ids()[i]);
    w.array(m.row(i));
  }
  w.check();
}

EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                std::optional<Modality> expected, const Catalog* catalog) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open " + path.string());
  binio::Reader r(in, path.string());
  r.expect_magic(kEmbMagic);
  Modality modality = modality_from_byte(r.get<std::uint8_t>());
  if (expected && *expected != modality) {
    throw LoadError(path.string() + ": modality " + std::string(modality_name(modality)) +
                    ", expected " + std::string(modality_name(*expected)));
  }
  auto dim = r.get<std::uint32_t>();
  auto rows = r.get<std::uint32_t>();
  if (dim == 0) throw LoadError(path.string() + ": zero dim");
  EmbeddingMatrix m(modality, dim);
  std::vector<float> buf(dim);
  for (std::uint32_t i = 0; i < rows; ++i) {
    std::string id = r.str16();
    r.array(std::span<float>(buf));
    if (catalog && !catalog->contains(id)) {
      throw LoadError(path.string() + ": unknown track id " + id);
    }
    try {
      m.add_row(std::move(id), buf);
    } catch (const LoadError& e) {
      throw LoadError(path.string() + ": " + e.what());
    }
  }
  if (!r.at_end()) throw LoadError(path.string() + ": trailing bytes after rows");
  return m;
}

// ---------------------------------------------------------------------------
// Split

CatalogSplit chronological_split(std::span<const Playlist> playlists, std::size_t test_size,
                                 std::uint64_t seed) {
  if (playlists.empty()) throw InvalidArgument("no playlists to split");
  auto latest = std::max_element(playlists.begin(), playlists.end(),
                                 [](const Playlist& a, const Playlist& b) {
                                   return std::chrono::sys_days(a.created_at) <
                                          std::chrono::sys_days(b.created_at);
                                 })->created_at;
  std::vector<std::string> candidates;
  for (const auto& p : playlists) {
    if (p.created_at == latest) candidates.push_back(p.playlist_id);
  }
  if (test_size > candidates.size()) {
    throw InvalidArgument("test_size " + std::to_string(test_size) + " exceeds the " +
                          std::to_string(candidates.size()) + " playlists created on " +
                          format_date(latest));
  }
  std::sort(candidates.begin(), candidates.end());
  std::mt19937_64 rng(seed);
  std::shuffle(candidates.begin(), candidates.end(), rng);
  CatalogSplit split;
  split.test_playlists.insert(candidates.begin(), candidates.begin() + test_size);
  for (const auto& p : playlists) {
    if (split.test_playlists.contains(p.playlist_id)) continue;
    split.train_playlists.insert(p.playlist_id);
    split.warm_tracks.insert(p.track_ids.begin(), p.track_ids.end());
  }
  for (const auto& p : playlists) {
    if (!split.test_playlists.contains(p.playlist_id)) continue;
    for (const auto& id : p.track_ids) {
      if (!split.warm_tracks.contains(id)) split.cold_tracks.insert(id);
    }
  }
  return split;
}

std::string split_to_json(const CatalogSplit& split) {
  json j = {{"train_playlists", split.train_playlists},
            {"test_playlists", split.test_playlists},
            {"warm_tracks", split.warm_tracks},
            {"cold_tracks", split.cold_tracks}};
  return j.dump(2);
}

CatalogSplit split_from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("split: ") + e.what());
  }
  CatalogSplit s;
  auto fill = [&](const char* key, std::set<std::string>& out) {
    if (!j.contains(key) || !j[key].is_array()) throw ParseError(std::string("split: missing ") + key);
    for (const auto& v : j[key]) out.insert(v.get<std::string>());
  };
  fill("train_playlists", s.train_playlists);
  fill("test_playlists", s.test_playlists);
  fill("warm_tracks", s.warm_tracks);
  fill("cold_tracks", s.cold_tracks);
  return s;
}

// ---------------------------------------------------------------------------

std::string render_text_doc(const Track& track) {
  std::string raw = track.title + " by " + track.artist;
  if (!track.album.empty()) raw += " from " + track.album;
  for (const auto& tag : track.tags) raw += " " + tag;
  if (track.year) raw += " " + std::to_string(*track.year);
  std::string out;
  out.reserve(raw.size());
  bool pending_space = false;
  for (unsigned char c : raw) {
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(c);
  }
  return out;
}

}  // namespace talkplay::catalog
