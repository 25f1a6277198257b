#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "dial2vec/corpus.hpp"
#include "dial2vec/encoder.hpp"
#include "dial2vec/selfguided.hpp"
#include "dial2vec/tokenizer.hpp"

namespace dial2vec {

// Interlocutor-level pooling (sum of per-role means) is the default; the
// single-role strategies expose the individual summands.
enum class PoolStrategy { Average, Interlocutor, P1Only, P2Only };

std::string to_string(PoolStrategy strategy);
PoolStrategy pool_strategy_from_string(const std::string& name);

struct DialogueEmbedding {
  std::string id;
  PoolStrategy strategy = PoolStrategy::Interlocutor;
  Eigen::VectorXd vector;
};

// e = (1/n) * sum of rows
Eigen::VectorXd average_pool(const ag::Matrix& encoder_output);

// mean of the rows one interlocutor owns
Eigen::VectorXd interlocutor_mean(const ag::Matrix& encoder_output,
                                  const Eigen::VectorXd& mask);

// e = sum over interlocutors of their per-interlocutor means
Eigen::VectorXd interlocutor_pool(const ag::Matrix& encoder_output,
                                  const MaskPair& masks);

// Trained (or initialized) model bundle used for embedding extraction.
struct EmbeddingModel {
  EncoderConfig config;
  EncoderParams params;
  Vocab vocab;
};

DialogueEmbedding embed_dialogue(const EmbeddingModel& model,
                                 const Dialogue& dialogue, PoolStrategy strategy);

std::vector<DialogueEmbedding> embed_corpus(const EmbeddingModel& model,
                                            const Corpus& corpus,
                                            PoolStrategy strategy);

// Text format: header "dialembed v1 <count> <d> <strategy>", then one line
// per dialogue: "<id>\t<d space-separated floats>". Values are written with
// enough digits to round-trip 32-bit floats exactly. All embeddings in one
// file share a strategy.
void export_embeddings(const std::vector<DialogueEmbedding>& embeddings,
                       const std::filesystem::path& path);
std::vector<DialogueEmbedding> import_embeddings(const std::filesystem::path& path);

}  // namespace dial2vec
