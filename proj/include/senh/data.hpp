// Synthetic mixture generation at controlled SNRs, WAV I/O, and
// dataset assembly (clean / noise / mixture triples plus a manifest).
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "senh/dsp.hpp"

namespace senh::data {

inline constexpr int kSampleRate = 16000;

enum class SpeechKind { kHarmonicVoice, kChirp, kWavFile };
enum class NoiseKind { kWhite, kPink, kBabbleSurrogate, kWavFile };

SpeechKind speech_kind_from_string(const std::string& s);
NoiseKind noise_kind_from_string(const std::string& s);

struct MixtureSpec {
  double snr_db = 0.0;
  SpeechKind speech_kind = SpeechKind::kHarmonicVoice;
  NoiseKind noise_kind = NoiseKind::kWhite;
  double duration_s = 2.0;
  std::uint64_t seed = 0;
  // only read when the corresponding kind is kWavFile
  std::string speech_path;
  std::string noise_path;

  void validate() const;
};

enum class Split { kTrain, kVal, kTest };
const char* to_string(Split s);
Split split_from_string(const std::string& s);

struct ManifestEntry {
  Split split = Split::kTrain;
  std::string clean_path;
  std::string noise_path;
  std::string mixture_path;
  double snr_db = 0.0;
  std::uint64_t seed = 0;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;

  std::vector<ManifestEntry> of_split(Split s) const;
};

// ---- generators ----

// Deterministic synthetic speech stand-ins. harmonic_voice: 5-12
// harmonics under a time-varying f0 in [80,300] Hz with pause
// modulation, peak <= 0.5 and energy confined below 4 kHz.
dsp::Waveform synth_speech(SpeechKind kind, double duration_s,
                           std::uint64_t seed);

dsp::Waveform synth_noise(NoiseKind kind, double duration_s,
                          std::uint64_t seed);

// Thrown when a mixture would clip; build_dataset retries the entry
// with a derived seed.
struct ClippingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Mixture {
  dsp::Waveform mixture;
  dsp::Waveform scaled_noise;
};

// Scales noise so 10 log10(||s||^2/||n||^2) equals snr_db, then adds.
// x = s + n holds sample-exactly. Throws ClippingError if any |x| > 1,
// std::invalid_argument on silent inputs or length mismatch.
Mixture mix_at_snr(const dsp::Waveform& speech, const dsp::Waveform& noise,
                   double snr_db);

// ---- WAV I/O: RIFF/WAVE, mono, 16 kHz, PCM16 or IEEE float32 ----

dsp::Waveform read_wav(const std::string& path);

enum class WavEncoding { kPcm16, kFloat32 };
void write_wav(const std::string& path, const dsp::Waveform& w,
               WavEncoding enc = WavEncoding::kFloat32);

// ---- dataset assembly ----

struct DatasetSpecEntry {
  MixtureSpec spec;
  Split split = Split::kTrain;
};

// Generates clean/noise/mixture triples under out_dir with the naming
// <split>/<index>_<snr>dB_{clean,noise,mixture}.wav and writes
// manifest.tsv. Entries whose mixture clips are regenerated with a
// derived seed (recorded in the manifest). Rebuilding with equal specs
// yields byte-identical files.
DatasetManifest build_dataset(const std::vector<DatasetSpecEntry>& specs,
                              const std::string& out_dir);

// Tab-separated manifest with a header row; paths relative to the
// manifest location.
void write_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_manifest(const std::string& path);

// Loads and checks the referenced files (existence, rate, finiteness).
struct LoadedEntry {
  ManifestEntry entry;
  dsp::Waveform clean;
  dsp::Waveform noise;
  dsp::Waveform mixture;
};
LoadedEntry load_entry(const ManifestEntry& e, const std::string& manifest_dir);

std::string manifest_dir_of(const std::string& manifest_path);

}  // namespace senh::data
