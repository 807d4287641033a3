import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api';
import { layout, LAYOUT_SEED, renderGraphView } from '../src/graphview';
import { renderProvenancePanel, resolveProvenance } from '../src/provenance';
import type { ChatResponse } from '../src/types';
import { chatRecords, replayFetch } from './helpers';

const lastChat = chatRecords[chatRecords.length - 1].body as ChatResponse;

describe('provenance resolution through /v1/query', () => {
  it('resolves every fixture id and draws one link per edge', async () => {
    const client = new ApiClient('', replayFetch());
    const resolved = await resolveProvenance(client, lastChat.provenance);
    expect(resolved.staleIds).toEqual([]);
    expect(resolved.edges.map((e) => e.id)).toEqual(lastChat.provenance.edge_ids);
    const panel = renderProvenancePanel(resolved, lastChat.provenance.triples);
    const links = (panel.match(/class="link"/g) ?? []).length;
    expect(links).toBe(lastChat.provenance.edge_ids.length);
    expect(panel).toContain('LOST_SALES');
    expect(panel).toMatchSnapshot();
  });

  it('marks unresolvable ids as stale instead of hiding them', async () => {
    const client = new ApiClient('', replayFetch());
    const withGhost = {
      ...lastChat.provenance,
      node_ids: [...lastChat.provenance.node_ids, 999],
    };
    const resolved = await resolveProvenance(client, withGhost);
    expect(resolved.staleIds).toEqual([999]);
    const panel = renderProvenancePanel(resolved, withGhost.triples);
    expect(panel).toContain('stale ids');
    expect(panel).toContain('#999');
  });

  it('renders the explicit ungrounded marker for empty provenance', async () => {
    const client = new ApiClient('', replayFetch());
    const resolved = await resolveProvenance(client, {
      node_ids: [],
      edge_ids: [],
      chunk_ids: [],
      triples: [],
    });
    expect(renderProvenancePanel(resolved, [])).toContain('ungrounded');
  });
});

describe('deterministic layout', () => {
  const nodes = [
    { id: 3, label: 'c' },
    { id: 1, label: 'a' },
    { id: 2, label: 'b' },
  ];

  it('same nodes always land on the same coordinates', () => {
    const a = layout(nodes);
    const b = layout([...nodes].reverse());
    expect([...a.entries()]).toEqual([...b.entries()]);
  });

  it('svg embeds the layout seed and stable positions', () => {
    const svg = renderGraphView(nodes, [{ id: 9, source: 1, target: 2, type: 'R' }]);
    expect(svg).toContain(`data-layout-seed="${LAYOUT_SEED}"`);
    expect(svg).toBe(renderGraphView(nodes, [{ id: 9, source: 1, target: 2, type: 'R' }]));
    expect(svg).toMatchSnapshot();
  });
});
