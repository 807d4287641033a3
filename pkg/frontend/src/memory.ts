import { escapeHtml } from './render';
import type { MemoryFact, SessionMemory } from './types';

function renderFact(fact: MemoryFact, superseded: boolean): string {
  const cls = superseded ? 'fact superseded' : 'fact';
  return (
    `<li class="${cls}" data-fact="${fact.fact_id}">` +
    `<span class="predicate">${escapeHtml(fact.predicate)}</span> ` +
    `<span class="object">${escapeHtml(String(fact.object))}</span>` +
    (superseded ? ` <span class="badge stale">superseded by #${fact.superseded_by}</span>` : '') +
    '</li>'
  );
}

/** Active facts always; superseded history behind a toggle. */
export function renderMemoryPanel(
  memory: SessionMemory | null,
  showHistory = false,
): string {
  if (memory === null) {
    return '<aside class="memory-panel empty">no session memory</aside>';
  }
  const active = memory.active.map((f) => renderFact(f, false)).join('');
  const activeBlock = active
    ? `<ul class="facts active">${active}</ul>`
    : '<div class="empty">no facts yet</div>';
  const historyBlock = showHistory
    ? `<ul class="facts history">${memory.history
        .map((f) => renderFact(f, true))
        .join('')}</ul>`
    : '';
  return (
    `<aside class="memory-panel" data-session="${escapeHtml(memory.session_id)}">` +
    `<h3>memory (turn ${memory.turns})</h3>` +
    activeBlock +
    `<label class="history-toggle"><input type="checkbox" data-action="toggle-history"` +
    `${showHistory ? ' checked' : ''}/> history (${memory.history.length})</label>` +
    historyBlock +
    '</aside>'
  );
}
