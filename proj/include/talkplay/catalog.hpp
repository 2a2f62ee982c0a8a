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

#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "talkplay/common.hpp"

// Catalog entities, their line-delimited JSON files, the binary embedding
// container and the chronological split.
namespace talkplay::catalog {

struct Track {
  std::string track_id;
  std::string title;
  std::string artist;
  std::string album;
  std::vector<std::string> tags;
  std::optional<int> year;
  std::optional<double> popularity;  // [0, 100]
  std::optional<std::string> lyrics;
};

struct Playlist {
  std::string playlist_id;
  std::chrono::year_month_day created_at;
  std::vector<std::string> track_ids;
};

// Tracks keyed by id plus playlists, validated on construction.
class Catalog {
 public:
  Catalog() = default;
  // Throws IntegrityError on duplicate ids, empty title/artist, empty
  // playlists or dangling track references.
  Catalog(std::vector<Track> tracks, std::vector<Playlist> playlists);

  const std::vector<Track>& tracks() const { return tracks_; }
  const std::vector<Playlist>& playlists() const { return playlists_; }

  const Track* find(std::string_view track_id) const;
  const Track& at(std::string_view track_id) const;
  bool contains(std::string_view track_id) const { return find(track_id) != nullptr; }
  const Playlist* find_playlist(std::string_view playlist_id) const;

  // Popularity with absent values treated as 0, used for tie-breaking.
  double popularity_or_zero(std::string_view track_id) const;

 private:
  std::vector<Track> tracks_;
  std::vector<Playlist> playlists_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::size_t> playlist_by_id_;
};

// Directory layout: tracks.jsonl (one Track object per line) and
// playlists.jsonl (one Playlist object per line).
Catalog load_catalog(const std::filesystem::path& dir);
void save_catalog(const Catalog& catalog, const std::filesystem::path& dir);

Track parse_track_line(std::string_view line, std::size_t line_no);
Playlist parse_playlist_line(std::string_view line, std::size_t line_no);
std::string track_to_json_line(const Track& t);
std::string playlist_to_json_line(const Playlist& p);

std::chrono::year_month_day parse_date(std::string_view text);
std::string format_date(std::chrono::year_month_day d);

// Row-major embedding rows keyed by track id; row order is preserved so that
// save/load round trips are bit-exact.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(Modality modality, std::uint32_t dim);

  Modality modality() const { return modality_; }
  std::uint32_t dim() const { return dim_; }
  std::size_t rows() const { return ids_.size(); }
  const std::vector<std::string>& ids() const { return ids_; }

  // Throws on dim mismatch, non-finite values or duplicate ids.
  void add_row(std::string track_id, std::span<const float> values);
  std::span<const float> row(std::size_t i) const;
  std::span<float> mutable_row(std::size_t i);
  std::optional<std::span<const float>> find(std::string_view track_id) const;
  std::span<const float> data() const { return data_; }

  friend bool operator==(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
    return a.modality_ == b.modality_ && a.dim_ == b.dim_ && a.ids_ == b.ids_ &&
           a.data_ == b.data_;
  }

 private:
  Modality modality_;
  std::uint32_t dim_;
  std::vector<std::string> ids_;
  std::vector<float> data_;
  std::unordered_map<std::string, std::size_t> index_;
};

// Format: "TPEMB1", u8 modality, u32 dim, u32 rows, then per row a
// u16-length-prefixed UTF-8 id followed by dim little-endian float32 values.
void save_embeddings(const EmbeddingMatrix& m, const std::filesystem::path& path);
// When `expected` is set the modality byte must match; when `catalog` is set
// every row id must resolve in it.
EmbeddingMatrix load_embeddings(const std::filesystem::path& path,
                                std::optional<Modality> expected = std::nullopt,
                                const Catalog* catalog = nullptr);

struct CatalogSplit {
  std::set<std::string> train_playlists;
  std::set<std::string> test_playlists;
  std::set<std::string> warm_tracks;  // tracks seen in any train playlist
  std::set<std::string> cold_tracks;  // tracks seen only in test playlists
};

// Samples `test_size` playlists (seeded) among those created on the latest
// date; everything else is train.
CatalogSplit chronological_split(std::span<const Playlist> playlists,
                                 std::size_t test_size, std::uint64_t seed = 0);

std::string split_to_json(const CatalogSplit& split);
CatalogSplit split_from_json(std::string_view text);

// "{Title} by {Artist} from {Album} {tags} {Year}", absent fields omitted and
// all whitespace runs collapsed to single spaces.
std::string render_text_doc(const Track& track);

}  // namespace talkplay::catalog
