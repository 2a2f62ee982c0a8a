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

#include "talkplay/fixture.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>

namespace talkplay::fixture {

namespace {

constexpr std::array<const char*, 8> kGenres = {"rock",  "jazz",  "blues",  "metal",
                                                "folk",  "disco", "reggae", "techno"};
constexpr std::array<const char*, 16> kFirst = {
    "Ava", "Ben", "Cleo", "Dax", "Eli", "Fay", "Gus", "Hana",
    "Ivo", "Jade", "Kai", "Lena", "Milo", "Nora", "Otto", "Pia"};
constexpr std::array<const char*, 16> kLast = {
    "Stone", "Rivers", "Vale", "Frost", "Marsh", "Quill", "Reyes", "Shaw",
    "Tate", "Underwood", "Voss", "Wilde", "Young", "Zane", "Brook", "Crane"};
constexpr std::array<const char*, 32> kAdjectives = {
    "Velvet", "Golden", "Silent", "Electric", "Broken", "Hidden", "Wild",    "Paper",
    "Crystal", "Hollow", "Neon",  "Lonely",   "Frozen", "Burning", "Secret", "Distant",
    "Amber",  "Crimson", "Silver", "Midnight", "Gentle", "Restless", "Quiet", "Endless",
    "Faded",  "Bright",  "Heavy",  "Sudden",   "Tender", "Rusty",   "Sacred", "Lucky"};
constexpr std::array<const char*, 32> kNouns = {
    "Harbor", "Garden", "Mirror", "Highway", "Letter", "Window", "Signal", "Echo",
    "Lantern", "Canyon", "Feather", "Engine", "Orchard", "Shadow", "Compass", "River",
    "Castle", "Meadow", "Thunder", "Station", "Ember", "Valley", "Comet", "Anchor",
    "Island", "Bridge", "Forest", "Circus", "Desert", "Tower", "Ocean", "Sparrow"};
constexpr std::array<const char*, 2> kMoods = {"mellow", "energetic"};
constexpr std::array<const char*, 2> kTempos = {"slow tempo", "fast tempo"};
constexpr std::array<const char*, 2> kLyrics = {"rain falls on the quiet harbor tonight",
                                                "sunshine on the open road we dance"};
constexpr std::array<int, 2> kDecades = {1970, 1990};

std::string padded(char prefix, std::size_t i, std::size_t width) {
  std::string digits = std::to_string(i);
  return std::string(1, prefix) + std::string(width > digits.size() ? width - digits.size() : 0, '0') +
         digits;
}

std::string genre_name(std::uint32_t g) {
  std::string name = kGenres[g % kGenres.size()];
  if (g >= kGenres.size()) name += std::to_string(g / kGenres.size() + 1);
  return name;
}

std::string artist_name(std::size_t a) {
  std::string name = std::string(kFirst[a % kFirst.size()]) + " " +
                     kLast[(a / kFirst.size()) % kLast.size()];
  if (a >= kFirst.size() * kLast.size()) name += " " + std::to_string(a / 256 + 1);
  return name;
}

std::string title_for(std::size_t i) {
  std::string t = std::string(kAdjectives[i % kAdjectives.size()]) + " " +
                  kNouns[(i / kAdjectives.size()) % kNouns.size()];
  if (i >= kAdjectives.size() * kNouns.size()) t += " " + std::to_string(i / 1024 + 1);
  return t;
}

}  // namespace

PlantedCatalog make_planted_catalog(const PlantedParams& p) {
  if (p.genres == 0 || p.artists_per_genre == 0 || p.tracks_per_artist == 0 || p.dim == 0) {
    throw InvalidArgument("fixture: sizes must be positive");
  }
  const std::size_t per_genre = std::size_t{p.artists_per_genre} * p.tracks_per_artist;
  const std::size_t n_tracks = per_genre * p.genres;
  if (p.playlist_len == 0 || 2 * p.playlist_len > per_genre) {
    throw InvalidArgument("fixture: playlist_len must be in [1, tracks per genre / 2]");
  }
  if (p.last_day_playlists > p.playlists) {
    throw InvalidArgument("fixture: last_day_playlists exceeds playlists");
  }
  std::mt19937_64 rng(p.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 100.0);

  // Title assignment is shuffled so that names carry no structure.
  std::vector<std::size_t> title_perm(n_tracks);
  for (std::size_t i = 0; i < n_tracks; ++i) title_perm[i] = i;
  std::shuffle(title_perm.begin(), title_perm.end(), rng);

  const std::size_t id_width = std::to_string(n_tracks).size() + 1;
  std::vector<catalog::Track> tracks;
  std::unordered_map<std::string, std::uint32_t> genre_of;
  std::vector<std::array<int, 4>> bits;  // mood, era, theme, tempo
  for (std::uint32_t g = 0; g < p.genres; ++g) {
    for (std::size_t j = 0; j < per_genre; ++j) {
      const std::size_t idx = g * per_genre + j;
      const std::size_t artist = g * p.artists_per_genre + j / p.tracks_per_artist;
      std::array<int, 4> b = {static_cast<int>(j & 1), static_cast<int>((j >> 1) & 1),
                              static_cast<int>((j >> 2) & 1), static_cast<int>((j >> 3) & 1)};
      catalog::Track t;
      t.track_id = padded('t', idx, id_width);
      t.title = title_for(title_perm[idx]);
      t.artist = artist_name(artist);
      t.album = std::string(kNouns[artist % kNouns.size()]) + " Sessions";
      t.tags = {genre_name(g), kMoods[b[0]], kTempos[b[3]]};
      t.year = kDecades[b[1]] + static_cast<int>(rng() % 10);
      t.popularity = std::round(uniform(rng) * 10.0) / 10.0;
      t.lyrics = kLyrics[b[2]];
      genre_of[t.track_id] = g;
      bits.push_back(b);
      tracks.push_back(std::move(t));
    }
  }

  // centres[m][g][bit]
  const std::array<int, 4> attribute_of_modality = {0, 1, 2, 3};
  std::vector<catalog::EmbeddingMatrix> content;
  for (std::size_t m = 0; m < 4; ++m) {
    std::vector<std::vector<float>> centres(std::size_t{p.genres} * 2,
                                            std::vector<float>(p.dim));
    for (auto& c : centres) {
      for (auto& v : c) v = static_cast<float>(normal(rng));
    }
    catalog::EmbeddingMatrix mat(kModalityOrder[m + 1], p.dim);
    std::vector<float> row(p.dim);
    for (std::size_t i = 0; i < tracks.size(); ++i) {
      const auto& c = centres[genre_of[tracks[i].track_id] * 2 +
                              bits[i][attribute_of_modality[m]]];
      for (std::uint32_t d = 0; d < p.dim; ++d) {
        row[d] = c[d] + static_cast<float>(p.noise * normal(rng));
      }
      mat.add_row(tracks[i].track_id, row);
    }
    content.push_back(std::move(mat));
  }

  using namespace std::chrono;
  const sys_days first_day = sys_days(year{2024} / January / 1);
  const sys_days last_day = sys_days(year{2024} / December / 31);
  std::vector<catalog::Playlist> playlists;
  const std::size_t early = p.playlists - p.last_day_playlists;
  const std::size_t pl_width = std::to_string(p.playlists).size() + 1;
  // Mood alternates with j, so even offsets are mellow and odd ones energetic.
  std::vector<std::size_t> pool(per_genre / 2);
  for (std::size_t i = 0; i < p.playlists; ++i) {
    catalog::Playlist pl;
    pl.playlist_id = padded('p', i, pl_width);
    pl.created_at = year_month_day(i < early ? first_day + days(static_cast<int>(i % 300))
                                             : last_day);
    const std::uint32_t g = static_cast<std::uint32_t>(rng() % p.genres);
    const std::size_t mood = rng() % 2;
    for (std::size_t j = 0; j < pool.size(); ++j) pool[j] = 2 * j + mood;
    std::shuffle(pool.begin(), pool.end(), rng);
    for (std::size_t j = 0; j < p.playlist_len; ++j) {
      pl.track_ids.push_back(tracks[g * per_genre + pool[j]].track_id);
    }
    playlists.push_back(std::move(pl));
  }

  PlantedCatalog out{catalog::Catalog(std::move(tracks), std::move(playlists)),
                     std::move(content), std::move(genre_of), nlohmann::json::object()};
  out.manifest = {{"tracks", out.catalog.tracks().size()},
                  {"playlists", out.catalog.playlists().size()},
                  {"genres", p.genres},
                  {"artists", std::size_t{p.genres} * p.artists_per_genre},
                  {"last_date", catalog::format_date(year_month_day(last_day))},
                  {"last_day_playlists", p.last_day_playlists},
                  {"dim", p.dim},
                  {"noise", p.noise},
                  {"seed", p.seed}};
  return out;
}

void write_planted_catalog(const PlantedCatalog& planted, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  catalog::save_catalog(planted.catalog, dir);
  for (const auto& m : planted.content) {
    catalog::save_embeddings(m, dir / (std::string(modality_name(m.modality())) + ".tpemb"));
  }
  std::ofstream out(dir / "manifest.json");
  out << planted.manifest.dump(2) << "\n";
  if (!out) throw Error("cannot write " + (dir / "manifest.json").string());
}

PlantedWorld build_planted_world(const PlantedParams& params, const WorldOptions& options) {
  PlantedWorld w;
  w.planted = make_planted_catalog(params);
  const auto& cat = w.planted.catalog;
  w.split = catalog::chronological_split(cat.playlists(), options.test_size,
                                         mix_seed(options.seed, 1));

  std::vector<catalog::Playlist> train_pl, test_pl;
  for (const auto& pl : cat.playlists()) {
    (w.split.test_playlists.contains(pl.playlist_id) ? test_pl : train_pl).push_back(pl);
  }
  w.embeddings.push_back(item2vec::train_item2vec(train_pl, options.item2vec).embeddings);
  for (const auto& m : w.planted.content) w.embeddings.push_back(m);

  for (std::size_t m = 0; m < kNumModalities; ++m) {
    quant::KMeansOptions ko;
    ko.k = options.k;
    ko.seed = mix_seed(options.seed, 100 + m);
    w.codebooks.push_back(quant::fit_kmeans(w.embeddings[m], ko).codebook);
  }
  w.vocab = tok::Vocabulary(256, options.k);
  std::vector<std::string> ids;
  for (const auto& t : cat.tracks()) ids.push_back(t.track_id);
  w.items = quant::tokenize_items(w.vocab, w.codebooks, w.embeddings, ids);

  for (std::size_t i = 0; i < train_pl.size() && w.train.size() < options.train_conversations;
       ++i) {
    w.train.push_back(synth::synthesize_rule_based(train_pl[i], cat,
                                                   mix_seed(options.seed, 1000 + i),
                                                   options.synth));
  }
  for (std::size_t i = 0; i < test_pl.size(); ++i) {
    w.test.push_back(synth::synthesize_rule_based(test_pl[i], cat,
                                                  mix_seed(options.seed, 500000 + i),
                                                  options.synth));
  }
  return w;
}

}  // namespace talkplay::fixture
