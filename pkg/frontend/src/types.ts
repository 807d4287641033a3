export interface SubQuery {
  kind: 'GRAPH' | 'TEXT';
  cypher: string | null;
  query: string | null;
}

export interface QueryPlan {
  sub_queries: SubQuery[];
  errors: string[];
}

export interface Provenance {
  node_ids: number[];
  edge_ids: number[];
  chunk_ids: number[];
  triples: string[];
}

export interface SentenceVerdict {
  index: number;
  text: string;
  verdict: 'SELF_SUPPORTED' | 'KG_SUPPORTED' | 'UNSUPPORTED' | 'EXCEPTION';
  evidence: Array<number | string>;
  reason: string | null;
  failures: string[];
}

export interface FactualityReport {
  response: string;
  n: number;
  adherence: number;
  partial: boolean;
  verdicts: SentenceVerdict[];
}

export interface ChatResponse {
  answer: string;
  factuality: FactualityReport | null;
  memory_errors: string[];
  pattern: string;
  plan: QueryPlan;
  provenance: Provenance;
  session_id: string;
  turn: number;
}

export interface QueryResult {
  columns: string[];
  rows: Array<Array<number | string | boolean | null>>;
}

export interface MemoryFact {
  fact_id: number;
  subject: number;
  predicate: string;
  object: number | string | boolean;
  valid_from: number;
  superseded_by: number | null;
}

export interface SessionMemory {
  session_id: string;
  turns: number;
  active: MemoryFact[];
  history: MemoryFact[];
}

export interface ServiceError {
  error: string;
  retry?: boolean;
}

/** One rendered conversation turn. */
export interface TurnView {
  turn: number;
  question: string;
  answer: string;
  adherence: number | null;
  provenance: Provenance;
}
