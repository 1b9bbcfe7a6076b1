#pragma once

#include <string>
#include <vector>

#include "kgbridge/metrics.hpp"

namespace kgbridge {

enum class PromptTemplate { molecule_qa, protein_qa, molecule_generation };

std::string prompt_template_name(PromptTemplate t);
PromptTemplate prompt_template_from_name(const std::string& s);

struct PromptBundle {
  PromptTemplate kind = PromptTemplate::molecule_qa;
  std::string smiles;                       // molecule-qa
  std::string sequence;                     // protein-qa
  std::vector<std::string> protein_names;   // molecule-qa, molecule-generation
  std::vector<std::string> disease_names;   // molecule-qa, protein-qa
  std::vector<std::string> go_terms;        // protein-qa
  std::string question;                     // *-qa
  std::string text_guidance;                // molecule-generation
};

// Fills the fixed template byte layout. Every placeholder the template
// uses must be bound; empty retrieved lists are an error.
std::string assemble_prompt(const PromptBundle& bundle);

enum class BundleSlot { infer, protein, disease, go_term };

struct RetrievalRole {
  std::string tail_modality;
  std::string relation;
  int k = 10;
  // Which bundle list receives the ids; infer matches the modality label
  // against "protein"/"disease" and falls back to go_terms.
  BundleSlot slot = BundleSlot::infer;
};

// Bridges the query node into each role's space and takes the top-k ids;
// lists land in the role's bundle slot in rank order. No language model is
// invoked.
PromptBundle retrieve_for_rag(const std::string& query_node_id,
                              const std::vector<RetrievalRole>& roles,
                              PromptTemplate kind, const BridgeModel& model,
                              const EmbeddingCache& cache, const KnowledgeGraph& kg,
                              const std::string& question_or_guidance);

}  // namespace kgbridge
