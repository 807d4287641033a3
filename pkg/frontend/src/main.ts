import { ApiClient, ApiError } from './api';
import { renderMemoryPanel } from './memory';
import { renderProvenancePanel, resolveProvenance } from './provenance';
import { renderConversation } from './render';
import { ConversationState, initialState, restoreSessionId, sendMessage } from './state';
import type { SessionMemory } from './types';

const baseUrl = (window as unknown as { KGRAG_BASE_URL?: string }).KGRAG_BASE_URL ?? '';
const client = new ApiClient(baseUrl);

let state: ConversationState = initialState('browser', restoreSessionId());
let memory: SessionMemory | null = null;
let showHistory = false;
let lastText = '';

function el(id: string): HTMLElement {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing #${id}`);
  return found;
}

function redraw(): void {
  el('conversation').innerHTML = renderConversation(state);
  el('memory').innerHTML = renderMemoryPanel(memory, showHistory);
  const retry = document.querySelector('[data-action="retry"]');
  retry?.addEventListener('click', () => {
    void submit(lastText);
  });
  const toggle = document.querySelector('[data-action="toggle-history"]');
  toggle?.addEventListener('change', () => {
    showHistory = !showHistory;
    redraw();
  });
  document.querySelectorAll('.turn').forEach((turnEl) => {
    turnEl.querySelector('details')?.addEventListener('toggle', (event) => {
      const details = event.target as HTMLDetailsElement;
      if (details.open) {
        const turn = state.turns[Number(turnEl.getAttribute('data-turn')) - 1];
        void drawProvenance(details, turn.provenance, turn.provenance.triples);
      }
    });
  });
}

async function drawProvenance(
  container: HTMLElement,
  provenance: Parameters<typeof resolveProvenance>[1],
  triples: string[],
): Promise<void> {
  try {
    const resolved = await resolveProvenance(client, provenance);
    const panel = document.createElement('div');
    panel.innerHTML = renderProvenancePanel(resolved, triples);
    container.appendChild(panel);
  } catch (err) {
    container.insertAdjacentHTML(
      'beforeend',
      `<div class="banner">provenance fetch failed: ${String(err)}</div>`,
    );
  }
}

async function refreshMemory(): Promise<void> {
  if (!state.sessionId) return;
  try {
    memory = await client.sessionMemory(state.sessionId);
  } catch (err) {
    memory = err instanceof ApiError && err.status === 404 ? null : memory;
  }
}

async function submit(text: string): Promise<void> {
  if (!text.trim()) return;
  lastText = text;
  state = { ...state, pending: true };
  redraw();
  state = await sendMessage({ ...state, pending: false }, client, text);
  await refreshMemory();
  redraw();
}

window.addEventListener('DOMContentLoaded', () => {
  redraw();
  const form = el('composer') as HTMLFormElement;
  form.addEventListener('submit', (event) => {
    event.preventDefault();
    const input = el('message') as HTMLInputElement;
    const text = input.value;
    input.value = '';
    void submit(text);
  });
});
