import { ApiClient, ApiError } from './api';
import type { ChatResponse, TurnView } from './types';

const SESSION_KEY = 'kgrag.session';

export interface ConversationState {
  userId: string;
  sessionId: string | null;
  turns: TurnView[];
  pending: boolean;
  /** Set after a retryable failure; cleared by the next successful send. */
  retryBanner: string | null;
  lastError: string | null;
}

export function initialState(userId: string, sessionId: string | null = null): ConversationState {
  return { userId, sessionId, turns: [], pending: false, retryBanner: null, lastError: null };
}

export function turnFromResponse(question: string, resp: ChatResponse): TurnView {
  return {
    turn: resp.turn,
    question,
    answer: resp.answer,
    adherence: resp.factuality ? resp.factuality.adherence : null,
    provenance: resp.provenance,
  };
}

/**
 * Send one message. At most one request is in flight per session; a
 * retryable failure (409 busy, network error) leaves the transcript
 * untouched and raises the retry banner instead of adding a phantom turn.
 */
export async function sendMessage(
  state: ConversationState,
  client: ApiClient,
  text: string,
): Promise<ConversationState> {
  if (state.pending) {
    return { ...state, lastError: 'a message is already in flight' };
  }
  const inFlight = { ...state, pending: true };
  try {
    const resp = await client.chat({
      user_id: state.userId,
      message: text,
      ...(state.sessionId ? { session_id: state.sessionId } : {}),
    });
    const next: ConversationState = {
      ...inFlight,
      pending: false,
      sessionId: resp.session_id,
      turns: [...state.turns, turnFromResponse(text, resp)],
      retryBanner: null,
      lastError: null,
    };
    persistSessionId(resp.session_id);
    return next;
  } catch (err) {
    const message = err instanceof ApiError ? err.message : String(err);
    const retryable = err instanceof ApiError ? err.retryable : true;
    return {
      ...inFlight,
      pending: false,
      retryBanner: retryable ? `service busy: ${message}` : null,
      lastError: message,
    };
  }
}

export function persistSessionId(sessionId: string, storage?: Storage): void {
  const store = storage ?? maybeLocalStorage();
  store?.setItem(SESSION_KEY, sessionId);
}

export function restoreSessionId(storage?: Storage): string | null {
  const store = storage ?? maybeLocalStorage();
  return store?.getItem(SESSION_KEY) ?? null;
}

function maybeLocalStorage(): Storage | null {
  return typeof localStorage === 'undefined' ? null : localStorage;
}
