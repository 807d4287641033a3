import { ApiClient, EDGE_QUERY, NODE_QUERY } from './api';
import { renderGraphView, ViewEdge, ViewNode } from './graphview';
import { escapeHtml } from './render';
import type { Provenance } from './types';

export interface ResolvedProvenance {
  nodes: ViewNode[];
  edges: ViewEdge[];
  staleIds: number[];
}

/**
 * Resolve provenance ids into drawable elements through /v1/query. Ids the
 * graph no longer knows come back as stale instead of being hidden.
 */
export async function resolveProvenance(
  client: ApiClient,
  provenance: Provenance,
): Promise<ResolvedProvenance> {
  const wantNodes = new Set<number>([...provenance.node_ids, ...provenance.chunk_ids]);
  const wantEdges = new Set<number>(provenance.edge_ids);

  const nodeRows = (await client.query(NODE_QUERY)).rows;
  const nodes: ViewNode[] = [];
  const seen = new Set<number>();
  for (const row of nodeRows) {
    const id = Number(row[0]);
    if (!wantNodes.has(id)) continue;
    seen.add(id);
    const name = row[1] === null ? `#${id}` : String(row[1]);
    nodes.push({ id, label: name });
  }

  const edgeRows = (await client.query(EDGE_QUERY)).rows;
  const edges: ViewEdge[] = [];
  const seenEdges = new Set<number>();
  for (const row of edgeRows) {
    const id = Number(row[0]);
    if (!wantEdges.has(id)) continue;
    seenEdges.add(id);
    const source = Number(row[1]);
    const target = Number(row[2]);
    edges.push({ id, source, target, type: 'REL' });
    for (const [endpoint, label] of [
      [source, row[3]],
      [target, row[4]],
    ] as const) {
      if (!seen.has(endpoint)) {
        seen.add(endpoint);
        nodes.push({ id: endpoint, label: label === null ? `#${endpoint}` : String(label) });
      }
    }
  }

  // triples arrive sorted by numeric edge id; match that before zipping types
  edges.sort((a, b) => a.id - b.id);
  const staleIds = [
    ...[...wantNodes].filter((id) => !seen.has(id)),
    ...[...wantEdges].filter((id) => !seenEdges.has(id)),
  ].sort((a, b) => a - b);
  return { nodes, edges, staleIds };
}

/** Attach the relationship types from the rendered triples, when parseable. */
export function typeEdges(edges: ViewEdge[], triples: string[]): ViewEdge[] {
  const types = triples
    .map((t) => /-\[([A-Z0-9_]+)\]->/.exec(t)?.[1])
    .filter((t): t is string => Boolean(t));
  return edges.map((e, i) => ({ ...e, type: types[i] ?? e.type }));
}

export function renderProvenancePanel(
  resolved: ResolvedProvenance,
  triples: string[],
): string {
  if (resolved.nodes.length === 0 && resolved.staleIds.length === 0) {
    return '<div class="provenance-panel ungrounded">ungrounded</div>';
  }
  const svg = renderGraphView(resolved.nodes, typeEdges(resolved.edges, triples));
  const stale = resolved.staleIds.length
    ? `<div class="stale-ids">stale ids: ${resolved.staleIds
        .map((id) => `<span class="badge stale">#${id}</span>`)
        .join(' ')}</div>`
    : '';
  const list = triples.map((t) => `<li>${escapeHtml(t)}</li>`).join('');
  return (
    `<div class="provenance-panel">${svg}` +
    `<ul class="triples">${list}</ul>${stale}</div>`
  );
}
