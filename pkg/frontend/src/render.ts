import type { ConversationState } from './state';
import type { TurnView } from './types';

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');
}

/** Adherence badge: value and a coarse risk class; absent when not scored. */
export function renderAdherenceBadge(adherence: number | null): string {
  if (adherence === null) {
    return '';
  }
  const cls = adherence >= 0.9 ? 'high' : adherence >= 0.6 ? 'mid' : 'low';
  return `<span class="badge adherence-${cls}" title="factual adherence">` +
    `${adherence.toFixed(2)}</span>`;
}

export function renderProvenanceSummary(turn: TurnView): string {
  const p = turn.provenance;
  const counts = `${p.node_ids.length} nodes, ${p.edge_ids.length} edges, ` +
    `${p.chunk_ids.length} chunks`;
  if (p.edge_ids.length === 0 && p.node_ids.length === 0 && p.chunk_ids.length === 0) {
    return '<div class="provenance ungrounded">ungrounded</div>';
  }
  const triples = p.triples
    .map((t) => `<li class="triple">${escapeHtml(t)}</li>`)
    .join('');
  return (
    `<details class="provenance"><summary>grounded by ${counts}</summary>` +
    `<ul class="triples">${triples}</ul></details>`
  );
}

export function renderTurn(turn: TurnView): string {
  return (
    `<article class="turn" data-turn="${turn.turn}">` +
    `<div class="question"><span class="who">you</span>${escapeHtml(turn.question)}</div>` +
    `<div class="answer"><span class="who">kgrag</span>${escapeHtml(turn.answer)}` +
    renderAdherenceBadge(turn.adherence) +
    '</div>' +
    renderProvenanceSummary(turn) +
    '</article>'
  );
}

export function renderConversation(state: ConversationState): string {
  const turns = state.turns.map(renderTurn).join('');
  const banner = state.retryBanner
    ? `<div class="banner retry">${escapeHtml(state.retryBanner)}` +
      '<button class="retry-button" data-action="retry">retry</button></div>'
    : '';
  const pending = state.pending ? '<div class="pending">…</div>' : '';
  return `<section class="conversation">${turns}${banner}${pending}</section>`;
}
