#include "senh/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "senh/common.hpp"

namespace senh::data {

namespace fs = std::filesystem;

SpeechKind speech_kind_from_string(const std::string& s) {
  if (s == "harmonic" || s == "harmonic_voice") return SpeechKind::kHarmonicVoice;
  if (s == "chirp") return SpeechKind::kChirp;
  if (s == "wav") return SpeechKind::kWavFile;
  throw std::invalid_argument("unknown speech kind: " + s);
}

NoiseKind noise_kind_from_string(const std::string& s) {
  if (s == "white") return NoiseKind::kWhite;
  if (s == "pink") return NoiseKind::kPink;
  if (s == "babble") return NoiseKind::kBabbleSurrogate;
  if (s == "wav") return NoiseKind::kWavFile;
  throw std::invalid_argument("unknown noise kind: " + s);
}

void MixtureSpec::validate() const {
  if (!(duration_s > 0.0))
    throw std::invalid_argument("mixture spec: duration must be positive");
  if (!std::isfinite(snr_db))
    throw std::invalid_argument("mixture spec: non-finite snr");
}

const char* to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw std::invalid_argument("unknown split: " + s);
}

std::vector<ManifestEntry> DatasetManifest::of_split(Split s) const {
  std::vector<ManifestEntry> out;
  for (const auto& e : entries)
    if (e.split == s) out.push_back(e);
  return out;
}

// ---- generators ----

namespace {

std::size_t sample_count(double duration_s) {
  return std::size_t(std::llround(duration_s * kSampleRate));
}

void normalize_peak(std::vector<double>& x, double peak) {
  double max_abs = 0.0;
  for (double v : x) max_abs = std::max(max_abs, std::abs(v));
  if (max_abs > 0.0)
    for (double& v : x) v *= peak / max_abs;
}

// Speech-like gating: voiced stretches separated by pauses, raised
// cosine ramps at the transitions.
std::vector<double> pause_envelope(std::size_t n, Rng& rng) {
  std::vector<double> env(n, 0.0);
  const std::size_t ramp = kSampleRate / 100;  // 10 ms
  std::size_t pos = 0;
  bool voiced = true;
  while (pos < n) {
    const double len_s =
        voiced ? rng.uniform(0.15, 0.45) : rng.uniform(0.05, 0.25);
    const std::size_t len =
        std::max<std::size_t>(1, sample_count(len_s));
    if (voiced) {
      const std::size_t r = std::min(ramp, len / 4);
      for (std::size_t i = 0; i < len && pos + i < n; ++i) {
        double g = 1.0;
        if (i < r)
          g = 0.5 * (1.0 - std::cos(std::numbers::pi * double(i) / double(r)));
        else if (len - 1 - i < r)
          g = 0.5 *
              (1.0 - std::cos(std::numbers::pi * double(len - 1 - i) / double(r)));
        env[pos + i] = g;
      }
    }
    pos += len;
    voiced = !voiced;
  }
  return env;
}

dsp::Waveform harmonic_voice(double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = sample_count(duration_s);

  // f0 trajectory: slow drift plus vibrato, clamped to [80, 300] Hz
  const double base = rng.uniform(110.0, 250.0);
  const double drift_rate = rng.uniform(0.3, 1.2);
  const double drift_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const double vib_rate = rng.uniform(4.0, 6.5);
  const double vib_phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  std::vector<double> f0(n);
  double f0_max = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = double(i) / kSampleRate;
    double f = base +
               30.0 * std::sin(2.0 * std::numbers::pi * drift_rate * t +
                               drift_phase) +
               6.0 * std::sin(2.0 * std::numbers::pi * vib_rate * t + vib_phase);
    f = std::clamp(f, 80.0, 300.0);
    f0[i] = f;
    f0_max = std::max(f0_max, f);
  }

  // cap harmonics so everything stays below 3.9 kHz
  std::size_t n_harm = 5 + rng.below(8);  // 5..12
  n_harm = std::min<std::size_t>(n_harm, std::size_t(3900.0 / f0_max));
  std::vector<double> amp(n_harm);
  for (std::size_t h = 0; h < n_harm; ++h)
    amp[h] = (0.8 + 0.4 * rng.uniform()) / double(h + 1);

  const auto env = pause_envelope(n, rng);
  const double trem_rate = rng.uniform(1.8, 3.2);

  dsp::Waveform w;
  w.sample_rate = kSampleRate;
  w.samples.resize(n);
  double phase = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    phase += 2.0 * std::numbers::pi * f0[i] / kSampleRate;
    double v = 0.0;
    for (std::size_t h = 0; h < n_harm; ++h)
      v += amp[h] * std::sin(double(h + 1) * phase);
    const double t = double(i) / kSampleRate;
    const double trem =
        0.75 + 0.25 * std::sin(2.0 * std::numbers::pi * trem_rate * t);
    w.samples[i] = env[i] * trem * v;
  }
  normalize_peak(w.samples, 0.25);
  return w;
}

dsp::Waveform chirp(double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = sample_count(duration_s);
  const double f_lo = rng.uniform(100.0, 200.0);
  const double f_hi = rng.uniform(2000.0, 3500.0);
  dsp::Waveform w;
  w.sample_rate = kSampleRate;
  w.samples.resize(n);
  double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const std::size_t fade = kSampleRate / 50;  // 20 ms
  for (std::size_t i = 0; i < n; ++i) {
    const double frac = double(i) / double(n);
    const double f = f_lo * std::pow(f_hi / f_lo, frac);
    phase += 2.0 * std::numbers::pi * f / kSampleRate;
    double g = 1.0;
    if (i < fade) g = double(i) / double(fade);
    if (n - 1 - i < fade) g = std::min(g, double(n - 1 - i) / double(fade));
    w.samples[i] = 0.25 * g * std::sin(phase);
  }
  return w;
}

dsp::Waveform white_noise(double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  dsp::Waveform w;
  w.sample_rate = kSampleRate;
  w.samples.resize(sample_count(duration_s));
  for (auto& v : w.samples) v = 0.1 * rng.gaussian();
  return w;
}

dsp::Waveform pink_noise(double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  dsp::Waveform w;
  w.sample_rate = kSampleRate;
  w.samples.resize(sample_count(duration_s));
  double b0 = 0, b1 = 0, b2 = 0, b3 = 0, b4 = 0, b5 = 0, b6 = 0;
  for (auto& v : w.samples) {
    const double white = rng.gaussian();
    b0 = 0.99886 * b0 + white * 0.0555179;
    b1 = 0.99332 * b1 + white * 0.0750759;
    b2 = 0.96900 * b2 + white * 0.1538520;
    b3 = 0.86650 * b3 + white * 0.3104856;
    b4 = 0.55000 * b4 + white * 0.5329522;
    b5 = -0.7616 * b5 - white * 0.0168980;
    v = 0.02 * (b0 + b1 + b2 + b3 + b4 + b5 + b6 + white * 0.5362);
    b6 = white * 0.115926;
  }
  return w;
}

dsp::Waveform babble_surrogate(double duration_s, std::uint64_t seed) {
  Rng rng(seed);
  dsp::Waveform w;
  w.sample_rate = kSampleRate;
  w.samples.assign(sample_count(duration_s), 0.0);
  for (int talker = 0; talker < 6; ++talker) {
    auto voice = harmonic_voice(duration_s, rng.derive(talker).next_u64());
    for (std::size_t i = 0; i < w.samples.size(); ++i)
      w.samples[i] += voice.samples[i];
  }
  normalize_peak(w.samples, 0.25);
  return w;
}

}  // namespace

dsp::Waveform synth_speech(SpeechKind kind, double duration_s,
                           std::uint64_t seed) {
  if (!(duration_s > 0.0))
    throw std::invalid_argument("synth_speech: duration must be positive");
  switch (kind) {
    case SpeechKind::kHarmonicVoice: return harmonic_voice(duration_s, seed);
    case SpeechKind::kChirp: return chirp(duration_s, seed);
    case SpeechKind::kWavFile:
      throw std::invalid_argument(
          "synth_speech: wav kind needs a file path (dataset assembly)");
  }
  throw std::logic_error("synth_speech: bad kind");
}

dsp::Waveform synth_noise(NoiseKind kind, double duration_s,
                          std::uint64_t seed) {
  if (!(duration_s > 0.0))
    throw std::invalid_argument("synth_noise: duration must be positive");
  switch (kind) {
    case NoiseKind::kWhite: return white_noise(duration_s, seed);
    case NoiseKind::kPink: return pink_noise(duration_s, seed);
    case NoiseKind::kBabbleSurrogate: return babble_surrogate(duration_s, seed);
    case NoiseKind::kWavFile:
      throw std::invalid_argument(
          "synth_noise: wav kind needs a file path (dataset assembly)");
  }
  throw std::logic_error("synth_noise: bad kind");
}

Mixture mix_at_snr(const dsp::Waveform& speech, const dsp::Waveform& noise,
                   double snr_db) {
  if (speech.samples.size() != noise.samples.size())
    throw std::invalid_argument("mix_at_snr: length mismatch");
  if (!std::isfinite(snr_db))
    throw std::invalid_argument("mix_at_snr: non-finite snr");

  std::vector<double> sq(speech.samples.size());
  for (std::size_t i = 0; i < sq.size(); ++i)
    sq[i] = speech.samples[i] * speech.samples[i];
  const double p_speech = pairwise_sum(sq);
  for (std::size_t i = 0; i < sq.size(); ++i)
    sq[i] = noise.samples[i] * noise.samples[i];
  const double p_noise = pairwise_sum(sq);
  if (p_speech <= 0.0)
    throw std::invalid_argument("mix_at_snr: silent speech input");
  if (p_noise <= 0.0)
    throw std::invalid_argument("mix_at_snr: silent noise input");

  const double gain =
      std::sqrt(p_speech / (p_noise * std::pow(10.0, snr_db / 10.0)));

  Mixture out;
  out.scaled_noise.sample_rate = speech.sample_rate;
  out.mixture.sample_rate = speech.sample_rate;
  out.scaled_noise.samples.resize(speech.samples.size());
  out.mixture.samples.resize(speech.samples.size());
  double peak = 0.0;
  for (std::size_t i = 0; i < speech.samples.size(); ++i) {
    out.scaled_noise.samples[i] = gain * noise.samples[i];
    out.mixture.samples[i] = speech.samples[i] + out.scaled_noise.samples[i];
    peak = std::max(peak, std::abs(out.mixture.samples[i]));
  }
  if (peak > 1.0)
    throw ClippingError("mix_at_snr: mixture clips (peak " +
                        std::to_string(peak) + ")");
  return out;
}

// ---- WAV I/O ----

namespace {

std::uint32_t rd_u32(const std::string& b, std::size_t pos) {
  std::uint32_t v;
  std::memcpy(&v, b.data() + pos, 4);
  return v;
}

std::uint16_t rd_u16(const std::string& b, std::size_t pos) {
  std::uint16_t v;
  std::memcpy(&v, b.data() + pos, 2);
  return v;
}

void wr_u32(std::string& b, std::uint32_t v) {
  char raw[4];
  std::memcpy(raw, &v, 4);
  b.append(raw, 4);
}

void wr_u16(std::string& b, std::uint16_t v) {
  char raw[2];
  std::memcpy(raw, &v, 2);
  b.append(raw, 2);
}

}  // namespace

dsp::Waveform read_wav(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("read_wav: cannot open " + path);
  std::string buf((std::istreambuf_iterator<char>(in)),
                  std::istreambuf_iterator<char>());
  if (buf.size() < 12 || buf.compare(0, 4, "RIFF") != 0 ||
      buf.compare(8, 4, "WAVE") != 0)
    throw std::runtime_error("read_wav: not a RIFF/WAVE file: " + path);

  bool have_fmt = false;
  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  std::size_t data_pos = 0, data_len = 0;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::string id = buf.substr(pos, 4);
    const std::uint32_t size = rd_u32(buf, pos + 4);
    pos += 8;
    if (pos + size > buf.size())
      throw std::runtime_error("read_wav: truncated chunk '" + id + "' in " +
                               path);
    if (id == "fmt ") {
      if (size < 16)
        throw std::runtime_error("read_wav: fmt chunk too small in " + path);
      format = rd_u16(buf, pos);
      channels = rd_u16(buf, pos + 2);
      rate = rd_u32(buf, pos + 4);
      bits = rd_u16(buf, pos + 14);
      have_fmt = true;
    } else if (id == "data") {
      data_pos = pos;
      data_len = size;
    }
    pos += size + (size & 1);  // chunks are word-aligned
  }
  if (!have_fmt)
    throw std::runtime_error("read_wav: missing fmt chunk in " + path);
  if (data_pos == 0)
    throw std::runtime_error("read_wav: missing data chunk in " + path);

  if (format != 1 && format != 3)
    throw std::runtime_error(
        "read_wav: unsupported format tag " + std::to_string(format) +
        " (want PCM=1 or IEEE-float=3) in " + path);
  if (channels != 1)
    throw std::runtime_error("read_wav: file has " + std::to_string(channels) +
                             " channels; only mono is supported: " + path);
  if (rate != std::uint32_t(kSampleRate))
    throw std::runtime_error("read_wav: sample rate " + std::to_string(rate) +
                             " Hz unsupported; expected 16000: " + path);
  if (format == 1 && bits != 16)
    throw std::runtime_error("read_wav: " + std::to_string(bits) +
                             "-bit PCM unsupported; expected 16: " + path);
  if (format == 3 && bits != 32)
    throw std::runtime_error("read_wav: " + std::to_string(bits) +
                             "-bit float unsupported; expected 32: " + path);

  dsp::Waveform w;
  w.sample_rate = kSampleRate;
  if (format == 1) {
    const std::size_t n = data_len / 2;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      std::int16_t v;
      std::memcpy(&v, buf.data() + data_pos + 2 * i, 2);
      w.samples[i] = double(v) / 32768.0;
    }
  } else {
    const std::size_t n = data_len / 4;
    w.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      float v;
      std::memcpy(&v, buf.data() + data_pos + 4 * i, 4);
      w.samples[i] = double(v);
    }
    if (!all_finite(w.samples))
      throw std::runtime_error("read_wav: non-finite sample in " + path);
  }
  return w;
}

void write_wav(const std::string& path, const dsp::Waveform& w,
               WavEncoding enc) {
  dsp::validate(w);
  if (w.sample_rate != kSampleRate)
    throw std::invalid_argument("write_wav: only 16 kHz supported");

  std::string body;
  if (enc == WavEncoding::kPcm16) {
    body.reserve(36 + w.samples.size() * 2);
    body.append("fmt ");
    wr_u32(body, 16);
    wr_u16(body, 1);  // PCM
    wr_u16(body, 1);  // mono
    wr_u32(body, kSampleRate);
    wr_u32(body, kSampleRate * 2);
    wr_u16(body, 2);
    wr_u16(body, 16);
    body.append("data");
    wr_u32(body, std::uint32_t(w.samples.size() * 2));
    for (double s : w.samples) {
      const double clamped = std::clamp(s, -1.0, 1.0);
      const long q = std::lround(clamped * 32768.0);
      const std::int16_t v = std::int16_t(std::clamp(q, -32768l, 32767l));
      char raw[2];
      std::memcpy(raw, &v, 2);
      body.append(raw, 2);
    }
  } else {
    body.reserve(48 + w.samples.size() * 4);
    body.append("fmt ");
    wr_u32(body, 16);
    wr_u16(body, 3);  // IEEE float
    wr_u16(body, 1);
    wr_u32(body, kSampleRate);
    wr_u32(body, kSampleRate * 4);
    wr_u16(body, 4);
    wr_u16(body, 32);
    body.append("fact");
    wr_u32(body, 4);
    wr_u32(body, std::uint32_t(w.samples.size()));
    body.append("data");
    wr_u32(body, std::uint32_t(w.samples.size() * 4));
    for (double s : w.samples) {
      const float v = float(s);
      char raw[4];
      std::memcpy(raw, &v, 4);
      body.append(raw, 4);
    }
  }

  std::string file;
  file.reserve(body.size() + 12);
  file.append("RIFF");
  wr_u32(file, std::uint32_t(4 + body.size()));
  file.append("WAVE");
  file += body;

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("write_wav: cannot open " + path);
  out.write(file.data(), long(file.size()));
  if (!out) throw std::runtime_error("write_wav: write failed: " + path);
}

// ---- dataset assembly ----

namespace {

dsp::Waveform load_or_synth_speech(const MixtureSpec& spec,
                                   std::uint64_t seed) {
  if (spec.speech_kind != SpeechKind::kWavFile)
    return synth_speech(spec.speech_kind, spec.duration_s, seed);
  auto w = read_wav(spec.speech_path);
  const std::size_t need = sample_count(spec.duration_s);
  if (w.samples.size() < need)
    throw std::runtime_error("dataset: speech file shorter than duration: " +
                             spec.speech_path);
  w.samples.resize(need);
  return w;
}

dsp::Waveform load_or_synth_noise(const MixtureSpec& spec,
                                  std::uint64_t seed) {
  if (spec.noise_kind != NoiseKind::kWavFile)
    return synth_noise(spec.noise_kind, spec.duration_s, seed);
  auto w = read_wav(spec.noise_path);
  const std::size_t need = sample_count(spec.duration_s);
  if (w.samples.size() < need)
    throw std::runtime_error("dataset: noise file shorter than duration: " +
                             spec.noise_path);
  w.samples.resize(need);
  return w;
}

std::string format_snr(double snr_db) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%+.2f", snr_db);
  return buf;
}

}  // namespace

DatasetManifest build_dataset(const std::vector<DatasetSpecEntry>& specs,
                              const std::string& out_dir) {
  fs::create_directories(out_dir);
  DatasetManifest manifest;
  std::size_t index_per_split[3] = {0, 0, 0};

  for (const auto& item : specs) {
    item.spec.validate();
    const auto split_name = to_string(item.split);
    fs::create_directories(fs::path(out_dir) / split_name);
    const std::size_t index = index_per_split[int(item.split)]++;

    dsp::Waveform clean, noise;
    Mixture mix;
    std::uint64_t seed_used = item.spec.seed;
    constexpr int kMaxAttempts = 64;
    for (int attempt = 0;; ++attempt) {
      seed_used = attempt == 0
                      ? item.spec.seed
                      : Rng(item.spec.seed).derive(100 + attempt).next_u64();
      clean = load_or_synth_speech(item.spec, seed_used);
      noise = load_or_synth_noise(item.spec,
                                  Rng(seed_used).derive(7).next_u64());
      try {
        mix = mix_at_snr(clean, noise, item.spec.snr_db);
        break;  // accepted
      } catch (const ClippingError&) {
        // clipping triples are dropped and regenerated deterministically
        if (attempt + 1 >= kMaxAttempts) throw;
      }
    }

    char stem[64];
    std::snprintf(stem, sizeof(stem), "%04zu_%sdB", index,
                  format_snr(item.spec.snr_db).c_str());
    ManifestEntry entry;
    entry.split = item.split;
    entry.snr_db = item.spec.snr_db;
    entry.seed = seed_used;
    entry.clean_path = std::string(split_name) + "/" + stem + "_clean.wav";
    entry.noise_path = std::string(split_name) + "/" + stem + "_noise.wav";
    entry.mixture_path = std::string(split_name) + "/" + stem + "_mixture.wav";

    write_wav((fs::path(out_dir) / entry.clean_path).string(), clean);
    write_wav((fs::path(out_dir) / entry.noise_path).string(),
              mix.scaled_noise);
    write_wav((fs::path(out_dir) / entry.mixture_path).string(), mix.mixture);
    manifest.entries.push_back(std::move(entry));
  }

  write_manifest(manifest, (fs::path(out_dir) / "manifest.tsv").string());
  return manifest;
}

void write_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot open " + path);
  out << "split\tclean\tnoise\tmixture\tsnr_db\tseed\n";
  char line[512];
  for (const auto& e : manifest.entries) {
    std::snprintf(line, sizeof(line), "%s\t%s\t%s\t%s\t%.6f\t%llu\n",
                  to_string(e.split), e.clean_path.c_str(),
                  e.noise_path.c_str(), e.mixture_path.c_str(), e.snr_db,
                  static_cast<unsigned long long>(e.seed));
    out << line;
  }
  if (!out) throw std::runtime_error("manifest: write failed: " + path);
}

DatasetManifest read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("manifest: cannot open " + path);
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("manifest: empty file: " + path);
  if (line != "split\tclean\tnoise\tmixture\tsnr_db\tseed")
    throw std::runtime_error("manifest: unexpected header in " + path);

  DatasetManifest manifest;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string split_s, clean, noise, mixture, snr_s, seed_s;
    if (!std::getline(ss, split_s, '\t') || !std::getline(ss, clean, '\t') ||
        !std::getline(ss, noise, '\t') || !std::getline(ss, mixture, '\t') ||
        !std::getline(ss, snr_s, '\t') || !std::getline(ss, seed_s))
      throw std::runtime_error("manifest: malformed row: " + line);
    ManifestEntry e;
    e.split = split_from_string(split_s);
    e.clean_path = clean;
    e.noise_path = noise;
    e.mixture_path = mixture;
    e.snr_db = std::stod(snr_s);
    e.seed = std::stoull(seed_s);
    manifest.entries.push_back(std::move(e));
  }
  return manifest;
}

std::string manifest_dir_of(const std::string& manifest_path) {
  auto parent = fs::path(manifest_path).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

LoadedEntry load_entry(const ManifestEntry& e,
                       const std::string& manifest_dir) {
  LoadedEntry loaded;
  loaded.entry = e;
  loaded.clean = read_wav((fs::path(manifest_dir) / e.clean_path).string());
  loaded.noise = read_wav((fs::path(manifest_dir) / e.noise_path).string());
  loaded.mixture =
      read_wav((fs::path(manifest_dir) / e.mixture_path).string());
  if (loaded.clean.samples.size() != loaded.mixture.samples.size() ||
      loaded.noise.samples.size() != loaded.mixture.samples.size())
    throw std::runtime_error("manifest: triple length mismatch for " +
                             e.mixture_path);
  return loaded;
}

}  // namespace senh::data
